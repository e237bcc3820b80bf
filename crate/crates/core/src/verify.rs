//! Dense oracles for the norm equivalences, the trace-norm bracket and the
//! interface decomposition transfer.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::fem::quadrature::{gauss_legendre, shifted_legendre, QuadratureRule};
use crate::fem::reference::{reference_edge_normal, reference_edge_point, reference_vertices, RtRef};
use crate::fem::{assemble_hdiv_gram, DofLabel, DpgSystem, Family, FemError, FeSpace};
use crate::linalg::dense::DENSE_BUDGET;
use crate::linalg::{dense_generalized_eig, CsrMatrix, LinalgError, LinearOperator, TripletBuilder};
use crate::mesh::{ElementKind, Mesh};
use crate::precond::{schur_complement, PrecondError, SchurSystem};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unsupported enrichment: RT index {0} exceeds 3")]
    Enrichment(usize),
    #[error("vector of length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("decomposer witness violates its reconstruction identity (defect {0:e})")]
    Reconstruction(f64),
    #[error("dense problem of size {size} exceeds the budget of {budget}")]
    Budget { size: usize, budget: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Precond(#[from] PrecondError),
}

/// The linear field `Ĝσ̄ = s (x̂ − x̂_I)` whose normal trace is `σ̄` on every
/// edge of the reference element.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceExtension {
    pub kind: ElementKind,
    pub sigma: f64,
    pub center: [f64; 2],
    pub scale: f64,
}

/// Inradius of the reference triangle.
pub fn triangle_inradius() -> f64 {
    1.0 - std::f64::consts::FRAC_1_SQRT_2
}

pub fn reference_extension_g(sigma: f64, kind: ElementKind) -> ReferenceExtension {
    match kind {
        ElementKind::Triangle => {
            let d = triangle_inradius();
            ReferenceExtension { kind, sigma, center: [d, d], scale: sigma / d }
        }
        ElementKind::Quadrilateral => ReferenceExtension { kind, sigma, center: [0.5, 0.5], scale: 2.0 * sigma },
    }
}

fn reference_area(kind: ElementKind) -> f64 {
    match kind {
        ElementKind::Triangle => 0.5,
        ElementKind::Quadrilateral => 1.0,
    }
}

fn reference_perimeter(kind: ElementKind) -> f64 {
    (0..kind.num_vertices()).map(|j| edge_length(kind, j)).sum()
}

fn edge_length(kind: ElementKind, j: usize) -> f64 {
    let v = reference_vertices(kind);
    let (a, b) = (v[j], v[(j + 1) % v.len()]);
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

impl ReferenceExtension {
    pub fn value(&self, x: [f64; 2]) -> [f64; 2] {
        [self.scale * (x[0] - self.center[0]), self.scale * (x[1] - self.center[1])]
    }

    pub fn divergence(&self) -> f64 {
        2.0 * self.scale
    }

    /// `n̂·Ĝσ̄` at parameter `t` of reference edge `j`, with the unit normal.
    pub fn normal_trace(&self, j: usize, t: f64) -> f64 {
        let n = reference_edge_normal(self.kind, j);
        let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
        let v = self.value(reference_edge_point(self.kind, j, t));
        (v[0] * n[0] + v[1] * n[1]) / len
    }

    pub fn hdiv_norm_sq(&self) -> f64 {
        let rule = QuadratureRule::new(self.kind, 3);
        let l2: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&x, w)| {
                let v = self.value(x);
                w * (v[0] * v[0] + v[1] * v[1])
            })
            .sum();
        l2 + self.divergence().powi(2) * reference_area(self.kind)
    }
}

/// `ĉ |K̂|^{1/2}` with `ĉ = ‖Ĝ1‖_{H(div)} / |∂K̂|`: the largest possible value
/// of [`g_constant_ratio`].
pub fn g_constant_bound(kind: ElementKind) -> f64 {
    reference_extension_g(1.0, kind).hdiv_norm_sq().sqrt() / reference_perimeter(kind)
        * reference_area(kind).sqrt()
}

/// `‖Ĝσ̄‖_{H(div)} / ‖div σ̂‖` for the reference RT field with coefficients
/// `coeffs`, where `σ̄` is the mean normal flux of `σ̂`.
pub fn g_constant_ratio(kind: ElementKind, k: usize, coeffs: &[f64]) -> f64 {
    let rt = RtRef::new(kind, k);
    assert_eq!(coeffs.len(), rt.ndofs());
    let rule = QuadratureRule::for_shape_degree(kind, k + 1);
    let tab = rt.tabulate(&rule.points);
    let (mut flux, mut div_sq) = (0.0, 0.0);
    for (q, w) in rule.weights.iter().enumerate() {
        let d: f64 = tab.divs_at(q).iter().zip(coeffs).map(|(a, c)| a * c).sum();
        flux += w * d;
        div_sq += w * d * d;
    }
    let g = reference_extension_g(flux / reference_perimeter(kind), kind);
    (g.hdiv_norm_sq() / div_sq).sqrt()
}

/// The enriched minimal-extension norm as a matrix on the base trace space.
pub struct EnrichedTrace {
    matrix: CsrMatrix,
    pub base_index: usize,
    pub enrichment: (usize, usize),
}

impl EnrichedTrace {
    /// Refines every element `enrichment.1` times, raises the RT index by
    /// `enrichment.0`, and minimizes `‖τ‖²_{H(div)}` subject to the normal
    /// trace on the original facets.
    pub fn new(mesh: &Arc<Mesh>, k: usize, enrichment: (usize, usize)) -> Result<Self, VerifyError> {
        let (dk, dr) = enrichment;
        let kk = k + dk;
        if kk > 3 {
            return Err(VerifyError::Enrichment(kk));
        }
        let fine = Arc::new(mesh.refined(dr));
        let rt = FeSpace::build(fine.clone(), Family::RaviartThomas, kk);
        let d = assemble_hdiv_gram(&rt)?;
        let per = 1usize << (2 * dr);

        // which original facet each fine facet lies on
        let mut parent_facet = vec![usize::MAX; fine.num_facets()];
        for e in 0..mesh.num_elements() {
            let coarse = mesh.element_coords(e);
            let nv = coarse.len();
            for c in e * per..(e + 1) * per {
                for lf in fine.local_facets(c) {
                    let [a, b] = fine.facets()[lf.facet];
                    let mid = mid(fine.vertex(a), fine.vertex(b));
                    for j in 0..nv {
                        if on_segment(mid, coarse[j], coarse[(j + 1) % nv]) {
                            let lfc = mesh.local_facet(e, j);
                            parent_facet[lf.facet] = lfc.facet;
                        }
                    }
                }
            }
        }
        let ne = kk + 1;
        let mut labels = vec![DofLabel::Interior; rt.ndofs()];
        for (f, &pf) in parent_facet.iter().enumerate() {
            if pf != usize::MAX {
                for m in 0..ne {
                    labels[f * ne + m] = DofLabel::Interface;
                }
            }
        }
        let schur = schur_complement(&d, &labels)?;
        let fixed = schur.interface_dofs();

        // trace transfer: base coefficient → fine facet moments
        let (gx, gw) = gauss_legendre(kk + k + 2);
        let nb = k + 1;
        let mut t = TripletBuilder::new(fixed.len(), mesh.num_facets() * nb);
        for (row, &dof) in fixed.iter().enumerate() {
            let (f, m) = (dof / ne, dof % ne);
            let pf = parent_facet[f];
            let [a, b] = fine.facets()[f];
            let (xa, xb) = (fine.vertex(a), fine.vertex(b));
            let [pa, pb] = mesh.facets()[pf];
            let (ya, yb) = (mesh.vertex(pa), mesh.vertex(pb));
            let n = fine.facet_normal(f);
            let np = mesh.facet_normal(pf);
            let sign = (n[0] * np[0] + n[1] * np[1]).signum();
            let len = fine.facet_length(f);
            let plen = mesh.facet_length(pf);
            for c in 0..nb {
                let mut s = 0.0;
                for (&tq, &w) in gx.iter().zip(&gw) {
                    let x = [xa[0] + tq * (xb[0] - xa[0]), xa[1] + tq * (xb[1] - xa[1])];
                    let tp = ((x[0] - ya[0]) * (yb[0] - ya[0]) + (x[1] - ya[1]) * (yb[1] - ya[1])) / (plen * plen);
                    s += w * shifted_legendre(c, tp) * shifted_legendre(m, tq);
                }
                let v = sign * (2 * c + 1) as f64 / plen * len * s;
                if v.abs() > 1e-15 {
                    t.push(row, pf * nb + c, v);
                }
            }
        }
        let t = t.build();
        Ok(Self { matrix: schur.matrix().ptap(&t), base_index: k, enrichment })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn norm_sq(&self, q: &[f64]) -> Result<f64, VerifyError> {
        if q.len() != self.matrix.nrows() {
            return Err(VerifyError::Length { got: q.len(), expected: self.matrix.nrows() });
        }
        let mq = self.matrix.mul_vec(q);
        Ok(q.iter().zip(&mq).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }
}

fn mid(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn on_segment(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let cross = (x[0] - a[0]) * dy - (x[1] - a[1]) * dx;
    let t = ((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / l2;
    cross.abs() <= 1e-10 * l2 && t > 0.0 && t < 1.0
}

/// One-shot version of [`EnrichedTrace::norm_sq`].
pub fn enriched_qnorm(q: &[f64], mesh: &Arc<Mesh>, k: usize, enrichment: (usize, usize)) -> Result<f64, VerifyError> {
    EnrichedTrace::new(mesh, k, enrichment)?.norm_sq(q)
}

/// A volumetric witness `w = v + Σ H_k r_k`.
#[derive(Debug, Clone)]
pub struct VolumeWitness {
    pub v: Vec<f64>,
    pub r_list: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionWitness {
    /// Interface remainder `v_f`.
    pub v: Vec<f64>,
    pub r_list: Vec<Vec<f64>>,
    /// `(diag(S) v_f, v_f) + Σ (S [H_k r_k]_f, [H_k r_k]_f)`.
    pub lhs: f64,
    /// `(S u_f, u_f)`, equal to `(D w, w)` for the extension `w`.
    pub energy: f64,
    /// `(diag(D) v, v) + Σ (D H_k r_k, H_k r_k)` of the volumetric witness.
    pub volume_lhs: f64,
    /// Volumetric achieved constant times the energy.
    pub rhs_ref: f64,
}

impl DecompositionWitness {
    pub fn constant(&self) -> f64 {
        self.lhs / self.energy
    }

    pub fn volume_constant(&self) -> f64 {
        self.volume_lhs / self.energy
    }
}

fn quad(a: &CsrMatrix, x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    x.iter().zip(&ax).map(|(p, q)| p * q).sum()
}

fn diag_quad(a: &CsrMatrix, x: &[f64]) -> f64 {
    a.diagonal().iter().zip(x).map(|(d, v)| d * v * v).sum()
}

/// Transfers a volumetric decomposition of the minimal extension `w = E u_f`
/// to the interface.
pub fn interface_decomposition(
    schur: &SchurSystem,
    h_list: &[CsrMatrix],
    u_f: &[f64],
    decomposer: &dyn Fn(&[f64]) -> VolumeWitness,
) -> Result<DecompositionWitness, VerifyError> {
    let f = schur.interface_dofs();
    if u_f.len() != f.len() {
        return Err(VerifyError::Length { got: u_f.len(), expected: f.len() });
    }
    let d = schur.parent();
    let s = schur.matrix();
    let w = schur.extend(u_f);
    let wit = decomposer(&w);
    if wit.r_list.len() != h_list.len() {
        return Err(VerifyError::Length { got: wit.r_list.len(), expected: h_list.len() });
    }
    let mut recon = wit.v.clone();
    let comps: Vec<Vec<f64>> = h_list.iter().zip(&wit.r_list).map(|(h, r)| h.mul_vec(r)).collect();
    for c in &comps {
        for (a, b) in recon.iter_mut().zip(c) {
            *a += b;
        }
    }
    let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let defect = recon.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if defect > 1e-12 * wn.max(f64::MIN_POSITIVE) {
        return Err(VerifyError::Reconstruction(defect / wn));
    }
    let volume_lhs = diag_quad(d, &wit.v) + comps.iter().map(|c| quad(d, c)).sum::<f64>();
    let restrict = |x: &[f64]| -> Vec<f64> { f.iter().map(|&k| x[k]).collect() };
    let v_f = restrict(&wit.v);
    let lhs = diag_quad(s, &v_f) + comps.iter().map(|c| quad(s, &restrict(c))).sum::<f64>();
    let energy = schur.qh_norm(u_f);
    Ok(DecompositionWitness {
        v: v_f,
        r_list: wit.r_list,
        lhs,
        energy,
        volume_lhs,
        rhs_ref: volume_lhs,
    })
}

/// The witness minimizing `(diag(D) v, v) + Σ (D H_k r_k, H_k r_k)` over all
/// decompositions of `w`, by a dense solve of the optimality system.
pub fn exact_volumetric_decomposer(d: &CsrMatrix, h_list: &[CsrMatrix]) -> impl Fn(&[f64]) -> VolumeWitness {
    let dd = d.to_dense();
    let lam = DMatrix::from_diagonal(&DVector::from_vec(d.diagonal()));
    let hs: Vec<DMatrix<f64>> = h_list.iter().map(|h| h.to_dense()).collect();
    let sizes: Vec<usize> = hs.iter().map(|h| h.ncols()).collect();
    let l: usize = sizes.iter().sum();
    let m = dd.nrows();
    let mut hcat = DMatrix::zeros(m, l);
    let mut off = 0;
    for h in &hs {
        hcat.view_mut((0, off), (m, h.ncols())).copy_from(h);
        off += h.ncols();
    }
    let mut k = hcat.transpose() * &lam * &hcat;
    let mut off = 0;
    for h in &hs {
        let blk = h.transpose() * &dd * h;
        let n = h.ncols();
        let mut view = k.view_mut((off, off), (n, n));
        view += blk;
        off += n;
    }
    let k = (&k + k.transpose()) * 0.5;
    let rhs_map = hcat.transpose() * &lam;
    let solver = SymmetricEigen::new(k);
    move |w: &[f64]| {
        let wv = DVector::from_column_slice(w);
        let b = &rhs_map * &wv;
        // pseudo-inverse solve keeps rank-deficient H well defined
        let lmax = solver.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut r = DVector::zeros(l);
        for i in 0..l {
            let ev = solver.eigenvalues[i];
            if ev.abs() > 1e-13 * lmax {
                let col = solver.eigenvectors.column(i);
                r += col * (col.dot(&b) / ev);
            }
        }
        let v = &wv - &hcat * &r;
        let mut r_list = Vec::new();
        let mut off = 0;
        for &n in &sizes {
            r_list.push(r.rows(off, n).iter().copied().collect());
            off += n;
        }
        VolumeWitness { v: v.iter().copied().collect(), r_list }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InfSup {
    pub c1: f64,
    pub c2: f64,
}

/// Extreme generalized eigenvalues of `(A, diag(G, S))`.
pub fn estimate_infsup(sys: &DpgSystem, g: &CsrMatrix, s: &SchurSystem) -> Result<InfSup, VerifyError> {
    let n = sys.dim();
    if n > DENSE_BUDGET {
        return Err(VerifyError::Budget { size: n, budget: DENSE_BUDGET });
    }
    let nu = sys.num_u();
    let sm = s.matrix();
    if g.nrows() != nu || sm.nrows() != sys.num_q() {
        return Err(VerifyError::Length { got: g.nrows() + sm.nrows(), expected: n });
    }
    let a = sys.operator().to_dense();
    let a = (&a + a.transpose()) * 0.5;
    let mut b = DMatrix::zeros(n, n);
    b.view_mut((0, 0), (nu, nu)).copy_from(&g.to_dense());
    b.view_mut((nu, nu), (n - nu, n - nu)).copy_from(&sm.to_dense());
    let ev = dense_generalized_eig(&a, &b)?;
    Ok(InfSup { c1: ev[0], c2: ev[ev.len() - 1] })
}

/// Extreme eigenvalues of `B A` for SPD `A` and preconditioner `B`, via the
/// symmetric form `Lᵀ B L` with `A = L Lᵀ`.
pub fn preconditioned_spectrum(a: &dyn LinearOperator, b: &dyn LinearOperator) -> Result<(f64, f64), VerifyError> {
    let n = a.dim();
    if n > DENSE_BUDGET {
        return Err(VerifyError::Budget { size: n, budget: DENSE_BUDGET });
    }
    let ad = a.to_dense();
    let ad = (&ad + ad.transpose()) * 0.5;
    let bd = b.to_dense();
    let bd = (&bd + bd.transpose()) * 0.5;
    let l = Cholesky::new(ad).ok_or(LinalgError::NotSpd)?.l();
    let c = l.transpose() * bd * &l;
    let c = (&c + c.transpose()) * 0.5;
    let ev = SymmetricEigen::new(c).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_membership() {
        assert!(on_segment([0.5, 0.5], [0.0, 0.0], [1.0, 1.0]));
        assert!(!on_segment([0.5, 0.6], [0.0, 0.0], [1.0, 1.0]));
        assert!(!on_segment([1.5, 1.5], [0.0, 0.0], [1.0, 1.0]));
    }

    #[test]
    fn edge_lengths() {
        assert!((edge_length(ElementKind::Triangle, 1) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(edge_length(ElementKind::Quadrilateral, 2), 1.0);
    }
}
