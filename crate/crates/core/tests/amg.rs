use std::sync::Arc;

use dpg_core::amg::{amg_setup, AmgParams};
use dpg_core::fem::{assemble_h1_gram, Family, FeSpace};
use dpg_core::linalg::{pcg, symmetry_defect, CsrMatrix, IdentityOperator, LinearOperator, PcgOptions};
use dpg_core::mesh::{ElementKind, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn laplace5(n: usize) -> CsrMatrix {
    let id = |i: usize, j: usize| i * n + j;
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            t.push((id(i, j), id(i, j), 4.0));
            if i > 0 {
                t.push((id(i, j), id(i - 1, j), -1.0));
            }
            if i + 1 < n {
                t.push((id(i, j), id(i + 1, j), -1.0));
            }
            if j > 0 {
                t.push((id(i, j), id(i, j - 1), -1.0));
            }
            if j + 1 < n {
                t.push((id(i, j), id(i, j + 1), -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n * n, n * n, &t)
}

fn h1_gram(n: usize, kind: ElementKind, p: usize) -> CsrMatrix {
    let mesh = Arc::new(Mesh::cartesian(n, n, kind).unwrap());
    let space = FeSpace::new(mesh, Family::Lagrange, p).unwrap();
    assemble_h1_gram(&space, None).unwrap()
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn assert_galerkin(a: &CsrMatrix) {
    let h = amg_setup(a, &AmgParams::default()).unwrap();
    for l in 0..h.num_levels() - 1 {
        let p = h.prolongation(l).unwrap();
        let fine = h.operator(l);
        let coarse = h.operator(l + 1);
        let reference = p.transpose().matmul(&fine.matmul(p)).to_dense();
        let err = (coarse.to_dense() - &reference).abs().max();
        assert!(err <= 1e-12 * reference.abs().max(), "level {l}: {err:e}");
        assert!(coarse.nrows() < fine.nrows());
    }
    assert!(h.operator(h.num_levels() - 1).nrows() <= 64);
}

#[test]
fn identity_gives_single_level() {
    let h = amg_setup(&CsrMatrix::identity(10), &AmgParams::default()).unwrap();
    assert_eq!(h.num_levels(), 1);
    let r: Vec<f64> = (0..10).map(|i| i as f64).collect();
    assert_eq!(h.apply_vec(&r), r);
}

#[test]
fn laplacian_hierarchy_depth_and_complexity() {
    let a = laplace5(32);
    let h = amg_setup(&a, &AmgParams::default()).unwrap();
    let st = h.stats();
    assert!(st.levels >= 3, "{st:?}");
    assert!(st.operator_complexity <= 3.0, "{st:?}");
    assert_galerkin(&a);
}

#[test]
fn galerkin_holds_on_fem_matrices() {
    for kind in [ElementKind::Triangle, ElementKind::Quadrilateral] {
        for p in 1..=3 {
            assert_galerkin(&h1_gram(12, kind, p));
        }
    }
}

#[test]
fn vcycle_is_linear_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for a in [laplace5(20), h1_gram(10, ElementKind::Triangle, 2), h1_gram(10, ElementKind::Quadrilateral, 3)] {
        let h = amg_setup(&a, &AmgParams::default()).unwrap();
        let n = a.nrows();
        assert!(h.apply_vec(&vec![0.0; n]).iter().all(|v| *v == 0.0));
        let probes: Vec<_> = (0..10).map(|_| (random_vec(n, &mut rng), random_vec(n, &mut rng))).collect();
        let d = symmetry_defect(&h, &probes);
        assert!(d <= 1e-12, "{d:e}");
        // positive definite on probes
        for (x, _) in &probes {
            let y = h.apply_vec(x);
            assert!(x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() > 0.0);
        }
    }
}

#[test]
fn single_level_hierarchy_is_exact_solve() {
    let a = laplace5(6);
    let h = amg_setup(&a, &AmgParams::default()).unwrap();
    assert_eq!(h.num_levels(), 1);
    let b: Vec<f64> = (0..36).map(|i| (i as f64).sin()).collect();
    let (_, rep) = pcg(&a, &h, &b, &PcgOptions { rtol: 1e-12, maxit: 10 }).unwrap();
    assert!(rep.iterations <= 2);
}

#[test]
fn h1_gram_iterations_are_mesh_independent() {
    for kind in [ElementKind::Quadrilateral, ElementKind::Triangle] {
        for p in 1..=2 {
            let mut its = Vec::new();
            for n in [4, 16, 64, 256] {
                let a = h1_gram(n, kind, p);
                let h = amg_setup(&a, &AmgParams::default()).unwrap();
                let b = vec![1.0; a.nrows()];
                let (_, rep) = pcg(&a, &h, &b, &PcgOptions { rtol: 1e-6, maxit: 200 }).unwrap();
                assert!(rep.converged);
                its.push(rep.iterations);
            }
            eprintln!("{kind} p={p}: {its:?}");
            assert!(its.iter().all(|&k| k <= 30), "{kind} p={p}: {its:?}");
            let tail = &its[1..];
            let spread = tail.iter().max().unwrap() - tail.iter().min().unwrap();
            assert!(spread <= 3, "{kind} p={p}: {its:?}");
        }
    }
}

#[test]
fn unpreconditioned_baseline_grows() {
    let a = h1_gram(32, ElementKind::Quadrilateral, 1);
    let b = vec![1.0; a.nrows()];
    let opts = PcgOptions { rtol: 1e-6, maxit: 1000 };
    let (_, plain) = pcg(&a, &IdentityOperator(a.nrows()), &b, &opts).unwrap();
    let h = amg_setup(&a, &AmgParams::default()).unwrap();
    let (_, amg) = pcg(&a, &h, &b, &opts).unwrap();
    assert!(amg.iterations < plain.iterations);
}
