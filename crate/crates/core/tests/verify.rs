use std::sync::Arc;

use dpg_core::fem::{assemble_dpg, assemble_h1_gram, assemble_hdiv_gram, Family, FeSpace};
use dpg_core::fem::reference::RtRef;
use dpg_core::linalg::{dense_generalized_eig, CsrMatrix};
use dpg_core::mesh::{ElementKind, Mesh};
use dpg_core::precond::schur_complement;
use dpg_core::verify::{
    enriched_qnorm, estimate_infsup, exact_volumetric_decomposer, g_constant_bound, g_constant_ratio,
    interface_decomposition, reference_extension_g, triangle_inradius, EnrichedTrace, VolumeWitness,
};
use dpg_core::fem::DofLabel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [ElementKind; 2] = [ElementKind::Triangle, ElementKind::Quadrilateral];

fn mesh(n: usize, kind: ElementKind) -> Arc<Mesh> {
    Arc::new(Mesh::cartesian(n, n, kind).unwrap())
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn g_has_exact_normal_trace_and_divergence() {
    for kind in KINDS {
        assert_eq!(reference_extension_g(0.0, kind).value([0.3, 0.2]), [0.0, 0.0]);
        for sigma in [1.0, -2.5, 0.125] {
            let g = reference_extension_g(sigma, kind);
            for j in 0..kind.num_vertices() {
                for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
                    assert!((g.normal_trace(j, t) - sigma).abs() <= 1e-14 * sigma.abs().max(1.0));
                }
            }
            let expect = match kind {
                ElementKind::Triangle => 2.0 * sigma / triangle_inradius(),
                ElementKind::Quadrilateral => 4.0 * sigma,
            };
            assert!((g.divergence() - expect).abs() <= 1e-14 * expect.abs());
        }
    }
    // incenter is equidistant from the three edges of the reference triangle
    let d = triangle_inradius();
    assert!(((1.0 - 2.0 * d) / 2f64.sqrt() - d).abs() < 1e-15);
}

#[test]
fn g_constant_is_bounded_and_attained() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for kind in KINDS {
        let n = RtRef::new(kind, 1).ndofs();
        let bound = g_constant_bound(kind);
        let samples: Vec<f64> = (0..200).map(|_| g_constant_ratio(kind, 1, &random_vec(n, &mut rng))).collect();
        let worst = samples.iter().copied().fold(0.0f64, f64::max);
        assert!(worst.is_finite() && worst > 0.5 * bound && worst <= bound * (1.0 + 1e-12), "{kind}: {worst}");
        // a constant divergence attains the bound: the RT₀ field x − x_c
        let rt0 = RtRef::new(kind, 0);
        let dofs = dpg_core::fem::reference::rt_reference_dofs(kind, 0, &|x| [x[0], x[1]]);
        assert_eq!(dofs.len(), rt0.ndofs());
        let r = g_constant_ratio(kind, 0, &dofs);
        assert!((r - bound).abs() <= 1e-12 * bound);
    }
}

fn base_schur(m: &Arc<Mesh>, k: usize) -> dpg_core::precond::SchurSystem {
    let rt = FeSpace::new(m.clone(), Family::RaviartThomas, k).unwrap();
    schur_complement(&assemble_hdiv_gram(&rt).unwrap(), rt.labels()).unwrap()
}

#[test]
fn unenriched_norm_equals_qh_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in KINDS {
        for k in 0..=1 {
            let m = mesh(2, kind);
            let s = base_schur(&m, k);
            for _ in 0..5 {
                let q = random_vec(s.interface_dofs().len(), &mut rng);
                let a = s.qh_norm(&q);
                let b = enriched_qnorm(&q, &m, k, (0, 0)).unwrap();
                assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
            }
        }
    }
}

#[test]
fn enrichment_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in KINDS {
        let m = mesh(2, kind);
        let s = base_schur(&m, 1);
        let e1 = EnrichedTrace::new(&m, 1, (1, 1)).unwrap();
        let e2 = EnrichedTrace::new(&m, 1, (2, 2)).unwrap();
        for _ in 0..50 {
            let q = random_vec(s.interface_dofs().len(), &mut rng);
            let (a, b, c) = (s.qh_norm(&q), e1.norm_sq(&q).unwrap(), e2.norm_sq(&q).unwrap());
            assert!(b <= a * (1.0 + 1e-12) && c <= b * (1.0 + 1e-12), "{a} {b} {c}");
        }
    }
}

#[test]
fn enrichment_rejects_unsupported_index() {
    assert!(EnrichedTrace::new(&mesh(1, ElementKind::Triangle), 2, (2, 0)).is_err());
}

/// Largest generalized eigenvalue of `(S, S_enriched)`: the squared ratio bound.
fn c3_squared(m: &Arc<Mesh>, k: usize) -> f64 {
    let s = base_schur(m, k);
    let e = EnrichedTrace::new(m, k, (2, 2)).unwrap();
    let ev = dense_generalized_eig(&s.matrix().to_dense(), &e.matrix().to_dense()).unwrap();
    *ev.last().unwrap()
}

#[test]
fn trace_norm_bracket_is_mesh_stable() {
    for kind in KINDS {
        for p in 1..=2 {
            let c: Vec<f64> = [2, 4, 8].iter().map(|&n| c3_squared(&mesh(n, kind), p - 1).sqrt()).collect();
            assert!(c.iter().all(|&x| x >= 1.0 - 1e-12));
            for w in c.windows(2) {
                assert!((w[1] / w[0] - 1.0).abs() <= 0.15, "{kind} p={p}: {c:?}");
            }
        }
    }
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &x * x.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1
}

fn random_h(n: usize, l: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
    CsrMatrix::from_dense(&DMatrix::from_fn(n, l, |_, _| rng.gen_range(-1.0..1.0)), 0.0)
}

fn labels(n: usize, nf: usize) -> Vec<DofLabel> {
    (0..n).map(|k| if k < n - nf { DofLabel::Interior } else { DofLabel::Interface }).collect()
}

#[test]
fn decomposition_transfers_to_interface() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for nh in [1, 2] {
        for _ in 0..50 {
            let n = 20;
            let d = CsrMatrix::from_dense(&random_spd(n, &mut rng), 0.0);
            let hs: Vec<CsrMatrix> = (0..nh).map(|_| random_h(n, 5, &mut rng)).collect();
            let s = schur_complement(&d, &labels(n, 8)).unwrap();
            let dec = exact_volumetric_decomposer(&d, &hs);
            let u = random_vec(8, &mut rng);
            let w = interface_decomposition(&s, &hs, &u, &dec).unwrap();
            assert!(w.constant() <= w.volume_constant() + 1e-10, "{} {}", w.constant(), w.volume_constant());
            assert!((w.energy - s.qh_norm(&u)).abs() <= 1e-12 * w.energy);
        }
    }
}

#[test]
fn trivial_decomposition_transfers() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 12;
    let d = CsrMatrix::from_dense(&random_spd(n, &mut rng), 0.0);
    let s = schur_complement(&d, &labels(n, 5)).unwrap();
    let u = random_vec(5, &mut rng);
    let id = |w: &[f64]| VolumeWitness { v: w.to_vec(), r_list: vec![] };
    let w = interface_decomposition(&s, &[], &u, &id).unwrap();
    assert_eq!(w.v, u);
    assert!(w.constant() <= w.volume_constant() + 1e-12);
    // with no interior DOFs the two constants coincide
    let s = schur_complement(&d, &labels(n, n)).unwrap();
    let u = random_vec(n, &mut rng);
    let w = interface_decomposition(&s, &[], &u, &id).unwrap();
    assert!((w.constant() - w.volume_constant()).abs() <= 1e-12 * w.constant());
}

#[test]
fn broken_decomposer_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = CsrMatrix::from_dense(&random_spd(6, &mut rng), 0.0);
    let s = schur_complement(&d, &labels(6, 3)).unwrap();
    let bad = |w: &[f64]| VolumeWitness { v: w.iter().map(|x| 2.0 * x).collect(), r_list: vec![] };
    assert!(interface_decomposition(&s, &[], &[1.0, 0.0, 0.0], &bad).is_err());
}

#[test]
fn infsup_constants_are_mesh_stable() {
    let mut c1 = Vec::new();
    for n in [2, 4, 8] {
        let m = mesh(n, ElementKind::Quadrilateral);
        let ne = m.num_elements();
        let sys = assemble_dpg(m.clone(), 1, 2, &vec![1.0; ne], &|_| 1.0).unwrap();
        let g = assemble_h1_gram(&sys.u_space, None).unwrap();
        let s = base_schur(&m, 0);
        let est = estimate_infsup(&sys, &g, &s).unwrap();
        assert!(est.c1 > 0.0 && est.c1 <= est.c2);
        c1.push(est.c1);
    }
    for w in c1[1..].windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() <= 0.25, "{c1:?}");
    }
}

