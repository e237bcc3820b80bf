use std::path::{Path, PathBuf};
use std::process::Command;

use dpg_cli::study::contrast_kappa;
use dpg_cli::{run, Cli, ConfigError, KappaSpec, RunConfig, Source, Study};
use clap::Parser;
use proptest::prelude::*;

fn dpg(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dpg"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn mesh_file(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("meshes").join(name);
    format!("file:{}", p.display())
}

fn parse(args: &[&str]) -> Result<RunConfig, ConfigError> {
    let mut v = vec!["dpg"];
    v.extend_from_slice(args);
    Cli::try_parse_from(v).unwrap().into_config()
}

#[test]
fn config_errors() {
    assert!(matches!(parse(&["--contrast", "1e-4"]), Err(ConfigError::ContrastWithoutSeed)));
    assert!(matches!(parse(&["--study", "contrast"]), Err(ConfigError::ContrastWithoutSeed)));
    assert!(matches!(
        parse(&["--study", "reduced_order", "--mesh", "cartesian:2,2,quad"]),
        Err(ConfigError::ReducedOrderNeedsTriangles)
    ));
    assert!(matches!(parse(&["--mesh", "grid:2,2"]), Err(ConfigError::MeshSpec(_))));
    assert!(matches!(parse(&["--mesh", "cartesian:2,x,tri"]), Err(ConfigError::MeshSpec(_))));
    assert!(matches!(parse(&["--order", "4"]), Err(ConfigError::Order(4))));
    assert!(matches!(parse(&["--order", "2", "--test-order", "1"]), Err(ConfigError::TestOrder { .. })));
    assert!(matches!(parse(&["--contrast=-1", "--seed", "1"]), Err(ConfigError::Contrast(_))));
    let cfg = parse(&["--contrast", "1e-4", "--seed", "9", "--study", "h_p_table"]).unwrap();
    assert_eq!(cfg.kappa, KappaSpec::Contrast { kappa0: 1e-4, seed: 9 });
    assert_eq!(cfg.study, Study::HPTable);
    assert_eq!(cfg.test_order(), 2);
}

#[test]
fn mesh_spec_round_trips() {
    for s in ["cartesian:3,5,tri", "cartesian:1,1,quad", "file:some/where.mesh"] {
        let m: dpg_cli::MeshSource = s.parse().unwrap();
        assert_eq!(m.to_string(), s);
    }
}

#[test]
fn small_quad_solve_converges_quickly() {
    let report = run(&RunConfig::default()).unwrap();
    let row = &report.tables[0].rows[0];
    assert!(row.converged);
    assert!((3..=20).contains(&row.iterations), "{row:?}");
    assert!(report.tables[0].precond.is_some());
}

#[test]
fn runs_are_deterministic() {
    let cfg = RunConfig {
        refinements: 1,
        kappa: KappaSpec::Contrast { kappa0: 1e-3, seed: 5 },
        ..RunConfig::default()
    };
    let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
    for (x, y) in a.tables[0].rows.iter().zip(&b.tables[0].rows) {
        assert_eq!(x.iterations, y.iterations);
        assert_eq!(x.avg_reduction.to_bits(), y.avg_reduction.to_bits());
    }
}

#[test]
fn zero_source_needs_no_iterations() {
    let cfg = RunConfig { source: Source::Zero, ..RunConfig::default() };
    let row = &run(&cfg).unwrap().tables[0].rows[0];
    assert_eq!(row.iterations, 0);
    assert!(row.converged);
}

#[test]
fn json_and_text_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = dpg(&["--refine", "1", "--order", "2", "--out-json", "r.json"], dir.path());
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let rows = json["tables"][0]["rows"].as_array().unwrap();
    let lines: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(lines.len(), rows.len());
    for (l, r) in lines.iter().zip(rows) {
        for (i, key) in ["level", "elements", "dofs", "iterations"].iter().enumerate() {
            assert_eq!(l[i].parse::<u64>().unwrap(), r[key].as_u64().unwrap());
        }
        assert_eq!(l[4].parse::<f64>().unwrap(), r["avg_reduction"].as_f64().unwrap());
        assert_eq!(l[5].parse::<bool>().unwrap(), r["converged"].as_bool().unwrap());
        assert_eq!(l[6].parse::<f64>().unwrap(), r["setup_seconds"].as_f64().unwrap());
        assert_eq!(l[7].parse::<f64>().unwrap(), r["solve_seconds"].as_f64().unwrap());
    }
}

#[test]
fn default_json_path_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = dpg(&[], dir.path());
    assert_eq!(code, 0);
    assert!(dir.path().join("dpg_report.json").exists());
    let (code, _) = dpg(&["--maxit", "2", "--mesh", "cartesian:4,4,tri"], dir.path());
    assert_eq!(code, 2);
    let (code, _) = dpg(&["--contrast", "0.1"], dir.path());
    assert_eq!(code, 1);
    let (code, _) = dpg(&["--mesh", "file:missing.mesh"], dir.path());
    assert_eq!(code, 1);
}

#[test]
fn file_meshes_solve() {
    for name in ["perturbed_tri.mesh", "split_quad.mesh"] {
        let cfg = RunConfig { mesh: mesh_file(name).parse().unwrap(), refinements: 1, ..RunConfig::default() };
        let report = run(&cfg).unwrap();
        assert!(report.all_converged());
        assert!(report.warnings.is_empty());
        let rows = &report.tables[0].rows;
        assert_eq!(rows[1].elements, 4 * rows[0].elements);
    }
}

#[test]
fn export_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = dpg(&["--export-matrices", "out"], dir.path());
    assert_eq!(code, 0);
    let level = dir.path().join("out/p1_r2/level0");
    for f in ["G.mtx", "D.mtx", "S.mtx", "Pi.mtx", "C.mtx", "rt_partition.txt", "lagrange_partition.txt"] {
        assert!(level.join(f).exists(), "{f}");
    }
}

#[test]
fn verify_suite_reports_measurements() {
    let cfg = RunConfig { study: Study::VerifySuite, refinements: 1, ..RunConfig::default() };
    let report = run(&cfg).unwrap();
    let get = |s: &str| report.measurements.iter().filter(|m| m.study == s).map(|m| m.value).collect::<Vec<_>>();
    assert!(get("energy_identity_defect").iter().all(|&v| v <= 1e-12));
    assert!(get("pi_f_interior_max").iter().all(|&v| v == 0.0));
    assert!(get("c3_squared").iter().all(|&v| v >= 1.0 - 1e-12));
    assert_eq!(get("c1").len(), 2);
    assert!(report.to_text().contains("study,level,p,value"));
}

#[test]
fn contrast_and_reduced_order_tables() {
    let cfg = RunConfig { study: Study::Contrast, seed: 2, ..RunConfig::default() };
    let report = run(&cfg).unwrap();
    assert_eq!(report.tables.len(), 6);
    assert!(report.tables.iter().all(|t| t.kappa0.is_some()));
    let cfg = RunConfig {
        study: Study::ReducedOrder,
        mesh: "cartesian:2,2,tri".parse().unwrap(),
        ..RunConfig::default()
    };
    let report = run(&cfg).unwrap();
    let orders: Vec<(usize, usize)> = report.tables.iter().map(|t| (t.p, t.r)).collect();
    assert_eq!(orders, [(1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 4)]);
}

proptest! {
    #[test]
    fn contrast_field_is_two_valued_and_stable(seed in any::<u64>(), n in 1usize..200, k0 in 1e-6f64..1e4) {
        let a = contrast_kappa(n, k0, seed);
        prop_assert!(a.iter().all(|&k| k == 1.0 || k == k0));
        // a longer field extends a shorter one
        let b = contrast_kappa(n + 7, k0, seed);
        prop_assert_eq!(&b[..n], &a[..]);
    }
}
