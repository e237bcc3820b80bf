use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dpg_core::fem::{
    assemble_curl, assemble_dpg, assemble_h1_gram, assemble_hdiv_gram, assemble_pi, write_partition, DofLabel,
    DpgSystem, Family, FeSpace,
};
use dpg_core::linalg::mmio::write_matrix_market;
use dpg_core::linalg::{pcg, IdentityOperator, LinalgError, LinearOperator, PcgOptions};
use dpg_core::mesh::{load_mesh, ElementKind, Mesh};
use dpg_core::precond::{
    build_dpg_precond, schur_complement, DpgPrecondOptions, PrecondSummary, SchurSystem, Variant,
};
use dpg_core::verify::{
    estimate_infsup, exact_volumetric_decomposer, interface_decomposition, preconditioned_spectrum,
    reference_extension_g, EnrichedTrace,
};
use dpg_core::linalg::dense_generalized_eig;
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{KappaSpec, MeshSource, PrecondChoice, RunConfig, Study};
use crate::report::{Measurement, Row, RunReport, Table};

/// Contrast values swept by the contrast study.
pub const CONTRASTS: [f64; 6] = [1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4];

/// Dense oracle limits used by the verify suite.
const CONDITION_BUDGET: usize = 2000;
const INFSUP_BUDGET: usize = 4000;

pub fn base_mesh(source: &MeshSource) -> Result<Mesh> {
    Ok(match source {
        MeshSource::Cartesian { nx, ny, kind } => Mesh::cartesian(*nx, *ny, *kind)?,
        MeshSource::File { path } => load_mesh(path).with_context(|| format!("loading {}", path.display()))?,
    })
}

/// Per-element coefficient: `1` or `κ₀` with probability ½, drawn from a
/// stream keyed by `(seed, element)`.
pub fn contrast_kappa(num_elements: usize, kappa0: f64, seed: u64) -> Vec<f64> {
    (0..num_elements)
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(e as u64);
            if rng.gen_bool(0.5) {
                kappa0
            } else {
                1.0
            }
        })
        .collect()
}

pub fn kappa_for(spec: &KappaSpec, num_elements: usize) -> Vec<f64> {
    match *spec {
        KappaSpec::Constant { value } => vec![value; num_elements],
        KappaSpec::Contrast { kappa0, seed } => contrast_kappa(num_elements, kappa0, seed),
    }
}

/// Assembles, preconditions and solves one level.
pub fn solve_level(
    mesh: Arc<Mesh>,
    level: usize,
    p: usize,
    r: usize,
    kappa: &[f64],
    cfg: &RunConfig,
    weighted_primal: bool,
) -> Result<(Row, Option<PrecondSummary>, DpgSystem)> {
    let t0 = Instant::now();
    let elements = mesh.num_elements();
    let sys = assemble_dpg(mesh, p, r, kappa, &|x| cfg.source.eval(x))?;
    let mut summary = None;
    let precond: Box<dyn LinearOperator> = match cfg.precond {
        PrecondChoice::None => Box::new(IdentityOperator(sys.dim())),
        choice => {
            let variant = if choice == PrecondChoice::Ideal { Variant::Ideal } else { Variant::Practical };
            let opts = DpgPrecondOptions { variant, amg: cfg.amg, weighted_primal };
            let b = build_dpg_precond(&sys, &opts)?;
            summary = Some(b.summary());
            Box::new(b)
        }
    };
    let setup = t0.elapsed().as_secs_f64();
    let rhs = sys.rhs();
    let opts = PcgOptions { rtol: cfg.rtol, maxit: cfg.maxit };
    let row = match pcg(&sys.operator(), precond.as_ref(), &rhs, &opts) {
        Ok((_, rep)) => Row {
            level,
            elements,
            dofs: sys.dim(),
            iterations: rep.iterations,
            avg_reduction: rep.avg_reduction,
            converged: rep.converged && !rep.residual_drift,
            setup_seconds: setup,
            solve_seconds: rep.wall_time,
            note: if rep.residual_drift { Some("recurrence residual drifted".into()) } else { None },
        },
        Err(e @ LinalgError::Breakdown { .. }) => Row {
            level,
            elements,
            dofs: sys.dim(),
            iterations: 0,
            avg_reduction: f64::NAN,
            converged: false,
            setup_seconds: setup,
            solve_seconds: 0.0,
            note: Some(e.to_string()),
        },
        Err(e) => return Err(e.into()),
    };
    info!(
        "level {level}: {elements} elements, {} dofs, {} iterations ({:.3})",
        row.dofs, row.iterations, row.avg_reduction
    );
    Ok((row, summary, sys))
}

fn sweep(
    cfg: &RunConfig,
    base: &Mesh,
    label: String,
    p: usize,
    r: usize,
    kappa: &KappaSpec,
    weighted_primal: bool,
) -> Result<Table> {
    let mut rows = Vec::new();
    let mut precond = None;
    let mut mesh = base.clone();
    for level in 0..=cfg.refinements {
        if level > 0 {
            mesh = mesh.refine_uniform();
        }
        let m = Arc::new(mesh.clone());
        let kappa = kappa_for(kappa, m.num_elements());
        let (row, summary, sys) = solve_level(m, level, p, r, &kappa, cfg, weighted_primal)?;
        if let Some(dir) = &cfg.export_matrices {
            export_level(&sys, &dir.join(&label).join(format!("level{level}")))?;
        }
        rows.push(row);
        precond = summary;
    }
    let kappa0 = match kappa {
        KappaSpec::Contrast { kappa0, .. } => Some(*kappa0),
        KappaSpec::Constant { .. } => None,
    };
    Ok(Table { label, p, r, kappa0, rows, precond })
}

/// Executes the configured study.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let base = base_mesh(&cfg.mesh)?;
    let mut warnings = Vec::new();
    let unused = base.unused_vertices();
    if !unused.is_empty() {
        let w = format!("{} unused vertices in the input mesh", unused.len());
        warn!("{w}");
        warnings.push(w);
    }
    let mut tables = Vec::new();
    let mut measurements = Vec::new();
    let weighted = matches!(cfg.kappa, KappaSpec::Contrast { .. });
    match cfg.study {
        Study::Solve => {
            let r = cfg.test_order();
            tables.push(sweep(cfg, &base, format!("p{}_r{}", cfg.p, r), cfg.p, r, &cfg.kappa, weighted)?);
        }
        Study::HPTable => {
            for p in 1..=3 {
                tables.push(sweep(cfg, &base, format!("p{}_r{}", p, p + 1), p, p + 1, &cfg.kappa, weighted)?);
            }
        }
        Study::ReducedOrder => {
            if base.kind() != ElementKind::Triangle {
                bail!(crate::config::ConfigError::ReducedOrderNeedsTriangles);
            }
            for p in 1..=3 {
                for r in [p, p + 1] {
                    tables.push(sweep(cfg, &base, format!("p{p}_r{r}"), p, r, &cfg.kappa, weighted)?);
                }
            }
        }
        Study::Contrast => {
            let seed = match cfg.kappa {
                KappaSpec::Contrast { seed, .. } => seed,
                KappaSpec::Constant { .. } => cfg.seed,
            };
            let r = cfg.test_order();
            for k0 in CONTRASTS {
                let spec = KappaSpec::Contrast { kappa0: k0, seed };
                tables.push(sweep(cfg, &base, format!("contrast_{k0:e}"), cfg.p, r, &spec, true)?);
            }
        }
        Study::VerifySuite => {
            let r = cfg.test_order();
            tables.push(sweep(cfg, &base, format!("p{}_r{}", cfg.p, r), cfg.p, r, &cfg.kappa, weighted)?);
            measurements = verify_suite(cfg, &base)?;
        }
    }
    Ok(RunReport { config: cfg.clone(), tables, measurements, warnings })
}

/// Writes every assembled matrix of a level plus the partition sidecars.
pub fn export_level(sys: &DpgSystem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    sys.export(dir)?;
    let mesh = sys.mesh();
    let g = assemble_h1_gram(&sys.u_space, None)?;
    write_matrix_market(dir.join("G.mtx"), &g)?;
    let k = sys.trial_order() - 1;
    let rt = FeSpace::new(mesh.clone(), Family::RaviartThomas, k)?;
    let d = assemble_hdiv_gram(&rt)?;
    write_matrix_market(dir.join("D.mtx"), &d)?;
    let s = schur_complement(&d, rt.labels())?;
    write_matrix_market(dir.join("S.mtx"), s.matrix())?;
    write_partition(dir.join("rt_partition.txt"), rt.labels())?;
    let lag = FeSpace::new(mesh.clone(), Family::Lagrange, k + 1)?;
    write_matrix_market(dir.join("Pi.mtx"), &assemble_pi(&lag, &rt)?)?;
    write_matrix_market(dir.join("C.mtx"), &assemble_curl(&lag, &rt)?)?;
    write_partition(dir.join("lagrange_partition.txt"), lag.labels())?;
    Ok(())
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Worst relative defect of `(A x, x) = ‖M⁻¹B x‖²_M` over `samples` random `x`.
pub fn energy_identity_defect(sys: &DpgSystem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sys.operator();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = random_vec(sys.dim(), &mut rng);
        let ax = a.apply_vec(&x);
        let lhs: f64 = ax.iter().zip(&x).map(|(p, q)| p * q).sum();
        let mut y = vec![0.0; sys.num_y()];
        sys.apply_b(&x, &mut y);
        sys.apply_m_inv(&mut y);
        let rhs = sys.m_norm_sq(&y);
        worst = worst.max((lhs - rhs).abs() / lhs);
    }
    worst
}

/// Worst relative gap between `(S q, q)` and the dense constrained minimum.
pub fn schur_minimization_defect(s: &SchurSystem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = s.parent().to_dense();
    let (i, f) = (s.interior_dofs(), s.interface_dofs());
    let dii = DMatrix::from_fn(i.len(), i.len(), |a, b| d[(i[a], i[b])]);
    let dif = DMatrix::from_fn(i.len(), f.len(), |a, b| d[(i[a], f[b])]);
    let lu = dii.lu();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = random_vec(f.len(), &mut rng);
        let yi = if i.is_empty() {
            DVector::zeros(0)
        } else {
            -lu.solve(&(&dif * DVector::from_column_slice(&q))).unwrap_or_else(|| DVector::zeros(i.len()))
        };
        let mut y = DVector::zeros(d.nrows());
        for (a, &k) in f.iter().enumerate() {
            y[k] = q[a];
        }
        for (a, &k) in i.iter().enumerate() {
            y[k] = yi[a];
        }
        let min = y.dot(&(&d * &y));
        let s_val = s.qh_norm(&q);
        worst = worst.max((s_val - min).abs() / min);
    }
    worst
}

/// `max |Π_{f ĩ}|` and `max |C_{f ĭ}|`.
pub fn structural_zero_blocks(mesh: &Arc<Mesh>, k: usize) -> Result<(f64, f64)> {
    let rt = FeSpace::new(mesh.clone(), Family::RaviartThomas, k)?;
    let lag = FeSpace::new(mesh.clone(), Family::Lagrange, k + 1)?;
    let pi = assemble_pi(&lag, &rt)?;
    let curl = assemble_curl(&lag, &rt)?;
    let f = rt.interface_dofs();
    let i_lag: Vec<usize> = (0..lag.ndofs()).filter(|&d| lag.labels()[d] == DofLabel::Interior).collect();
    let i_vec: Vec<usize> = i_lag.iter().flat_map(|&d| [2 * d, 2 * d + 1]).collect();
    Ok((pi.submatrix(&f, &i_vec).max_abs(), curl.submatrix(&f, &i_lag).max_abs()))
}

/// Worst `interface constant − volumetric constant` over random instances.
pub fn decomposition_gap(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..instances {
        let n = rng.gen_range(8..=30);
        let nf = rng.gen_range(2..n);
        let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let d = &x * x.transpose() + DMatrix::identity(n, n) * (0.05 * n as f64);
        let d = dpg_core::linalg::CsrMatrix::from_dense(&d, 0.0);
        let nh = 1 + t % 2;
        let hs: Vec<_> = (0..nh)
            .map(|_| {
                let l = rng.gen_range(1..=n / 3);
                dpg_core::linalg::CsrMatrix::from_dense(&DMatrix::from_fn(n, l, |_, _| rng.gen_range(-1.0..1.0)), 0.0)
            })
            .collect();
        let labels: Vec<DofLabel> =
            (0..n).map(|k| if k < n - nf { DofLabel::Interior } else { DofLabel::Interface }).collect();
        let s = schur_complement(&d, &labels)?;
        let dec = exact_volumetric_decomposer(&d, &hs);
        let u = random_vec(nf, &mut rng);
        let w = interface_decomposition(&s, &hs, &u, &dec)?;
        worst = worst.max(w.constant() - w.volume_constant());
    }
    Ok(worst)
}

/// Squared c₃ surrogate: the largest eigenvalue of `(S, S_enriched)`.
pub fn c3_squared(mesh: &Arc<Mesh>, k: usize, enrichment: (usize, usize)) -> Result<f64> {
    let rt = FeSpace::new(mesh.clone(), Family::RaviartThomas, k)?;
    let s = schur_complement(&assemble_hdiv_gram(&rt)?, rt.labels())?;
    let e = EnrichedTrace::new(mesh, k, enrichment)?;
    let ev = dense_generalized_eig(&s.matrix().to_dense(), &e.matrix().to_dense())?;
    Ok(*ev.last().unwrap())
}

fn verify_suite(cfg: &RunConfig, base: &Mesh) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let p = cfg.p;
    let r = cfg.test_order();
    let k = p - 1;
    let mut push = |study: &str, level: usize, value: f64| {
        out.push(Measurement { study: study.to_string(), level, p, value });
    };
    let mut g_err: f64 = 0.0;
    for kind in [ElementKind::Triangle, ElementKind::Quadrilateral] {
        for sigma in [1.0, -0.5] {
            let g = reference_extension_g(sigma, kind);
            for j in 0..kind.num_vertices() {
                for t in [0.0, 0.5, 1.0] {
                    g_err = g_err.max((g.normal_trace(j, t) - sigma).abs());
                }
            }
        }
    }
    push("g_normal_trace_error", 0, g_err);
    push("decomposition_gap", 0, decomposition_gap(100, cfg.seed)?);

    let mut mesh = base.clone();
    for level in 0..=cfg.refinements {
        if level > 0 {
            mesh = mesh.refine_uniform();
        }
        let m = Arc::new(mesh.clone());
        let kappa = kappa_for(&cfg.kappa, m.num_elements());
        let sys = assemble_dpg(m.clone(), p, r, &kappa, &|x| cfg.source.eval(x))?;
        push("energy_identity_defect", level, energy_identity_defect(&sys, 100, cfg.seed));
        let (zp, zc) = structural_zero_blocks(&m, k)?;
        push("pi_f_interior_max", level, zp);
        push("curl_f_interior_max", level, zc);
        let rt = FeSpace::new(m.clone(), Family::RaviartThomas, k)?;
        let s = schur_complement(&assemble_hdiv_gram(&rt)?, rt.labels())?;
        if rt.ndofs() <= CONDITION_BUDGET {
            push("schur_min_defect", level, schur_minimization_defect(&s, 50, cfg.seed));
        }
        if sys.num_q() <= CONDITION_BUDGET {
            push("c3_squared", level, c3_squared(&m, k, (2.min(3 - k), 2))?);
        }
        if sys.dim() <= INFSUP_BUDGET {
            let g = assemble_h1_gram(&sys.u_space, None)?;
            let est = estimate_infsup(&sys, &g, &s)?;
            push("c1", level, est.c1);
            push("c2", level, est.c2);
        }
        if sys.dim() <= CONDITION_BUDGET && cfg.precond != PrecondChoice::None {
            let variant = if cfg.precond == PrecondChoice::Ideal { Variant::Ideal } else { Variant::Practical };
            let weighted = matches!(cfg.kappa, KappaSpec::Contrast { .. });
            let b = build_dpg_precond(&sys, &DpgPrecondOptions { variant, amg: cfg.amg, weighted_primal: weighted })?;
            let (lo, hi) = preconditioned_spectrum(&sys.operator(), &b)?;
            push("preconditioned_condition", level, hi / lo);
        }
    }
    Ok(out)
}
