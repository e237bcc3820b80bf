//! Interface Schur complement, auxiliary-space interface preconditioner and
//! the block-diagonal DPG preconditioners.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amg::{amg_setup, amg_setup_systems, AmgError, AmgHierarchy, AmgParams, AmgStats};
use crate::fem::{
    assemble_curl, assemble_h1_gram, assemble_hdiv_gram, assemble_pi, DofLabel, DpgSystem, Family, FemError,
    FeSpace,
};
use crate::linalg::{CsrMatrix, LinearOperator, TripletBuilder};
use crate::mesh::Mesh;

#[derive(Debug, Error)]
pub enum PrecondError {
    #[error("partition has {labels} labels for a matrix of size {size}")]
    Partition { labels: usize, size: usize },
    #[error("interior block {block} is not positive definite")]
    SingularBlock { block: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("projected {which} matrix has a zero diagonal entry at {row}")]
    ZeroDiagonal { which: &'static str, row: usize },
    #[error(transparent)]
    Amg(#[from] AmgError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

struct InteriorBlock {
    interior: Vec<usize>,
    /// Interface indices (in interface numbering) coupled to the block.
    iface: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
    d_if: DMatrix<f64>,
}

/// `S = D_ff − D_fi D_ii⁻¹ D_if` with the element-local eliminations kept for
/// reconstructing minimal extensions.
pub struct SchurSystem {
    s: CsrMatrix,
    d: CsrMatrix,
    interior: Vec<usize>,
    interface: Vec<usize>,
    blocks: Vec<InteriorBlock>,
}

impl fmt::Debug for SchurSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchurSystem")
            .field("interface", &self.interface.len())
            .field("interior", &self.interior.len())
            .field("blocks", &self.blocks.len())
            .finish()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Eliminates the interior DOFs. Interior DOFs coupled through `D_ii` form
/// one block each (one per element for RT Grams).
pub fn schur_complement(d: &CsrMatrix, labels: &[DofLabel]) -> Result<SchurSystem, PrecondError> {
    let n = d.nrows();
    if labels.len() != n || !d.is_square() {
        return Err(PrecondError::Partition { labels: labels.len(), size: n });
    }
    let mut local = vec![usize::MAX; n];
    let (mut interior, mut interface) = (Vec::new(), Vec::new());
    for (k, l) in labels.iter().enumerate() {
        match l {
            DofLabel::Interior => {
                local[k] = interior.len();
                interior.push(k);
            }
            DofLabel::Interface => {
                local[k] = interface.len();
                interface.push(k);
            }
        }
    }
    let mut parent: Vec<usize> = (0..interior.len()).collect();
    for (a, &i) in interior.iter().enumerate() {
        let (cs, _) = d.row(i);
        for &j in cs {
            if labels[j] == DofLabel::Interior {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, local[j]));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![usize::MAX; interior.len()];
    for a in 0..interior.len() {
        let r = find(&mut parent, a);
        if group_of[r] == usize::MAX {
            group_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of[r]].push(interior[a]);
    }

    let mut tb = TripletBuilder::new(interface.len(), interface.len());
    for (a, &i) in interface.iter().enumerate() {
        let (cs, vs) = d.row(i);
        for (&j, &v) in cs.iter().zip(vs) {
            if labels[j] == DofLabel::Interface {
                tb.push(a, local[j], v);
            }
        }
    }
    let mut blocks = Vec::with_capacity(groups.len());
    for (bi, group) in groups.into_iter().enumerate() {
        let ni = group.len();
        let mut iface: Vec<usize> = Vec::new();
        for &i in &group {
            let (cs, _) = d.row(i);
            iface.extend(cs.iter().filter(|&&j| labels[j] == DofLabel::Interface).map(|&j| local[j]));
        }
        iface.sort_unstable();
        iface.dedup();
        let nf = iface.len();
        let dii = DMatrix::from_fn(ni, ni, |a, b| d.get(group[a], group[b]));
        let d_if = DMatrix::from_fn(ni, nf, |a, b| d.get(group[a], interface[iface[b]]));
        let chol = Cholesky::new(dii).ok_or(PrecondError::SingularBlock { block: bi })?;
        let x = chol.l().solve_lower_triangular(&d_if).ok_or(PrecondError::SingularBlock { block: bi })?;
        for a in 0..nf {
            for b in a..nf {
                let v = -x.column(a).dot(&x.column(b));
                tb.push(iface[a], iface[b], v);
                if a != b {
                    tb.push(iface[b], iface[a], v);
                }
            }
        }
        blocks.push(InteriorBlock { interior: group, iface, chol, d_if });
    }
    Ok(SchurSystem { s: tb.build(), d: d.clone(), interior, interface, blocks })
}

impl SchurSystem {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.s
    }

    pub fn parent(&self) -> &CsrMatrix {
        &self.d
    }

    pub fn interface_dofs(&self) -> &[usize] {
        &self.interface
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `(S q, q)`, the squared discrete trace norm.
    pub fn qh_norm(&self, q: &[f64]) -> f64 {
        assert_eq!(q.len(), self.interface.len());
        let sq = self.s.mul_vec(q);
        q.iter().zip(&sq).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    /// Minimal-energy extension: `r_f = q`, `r_i = −D_ii⁻¹ D_if q`.
    pub fn extend(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.interface.len());
        let mut r = vec![0.0; self.d.nrows()];
        for (a, &k) in self.interface.iter().enumerate() {
            r[k] = q[a];
        }
        for b in &self.blocks {
            let ql = DVector::from_iterator(b.iface.len(), b.iface.iter().map(|&k| q[k]));
            let ri = b.chol.solve(&(&b.d_if * ql));
            for (a, &i) in b.interior.iter().enumerate() {
                r[i] = -ri[a];
            }
        }
        r
    }
}

fn symmetric_gauss_seidel(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = 0.0);
    let n = a.nrows();
    let mut step = |i: usize| {
        let (cs, vs) = a.row(i);
        let mut r = b[i];
        for (&j, &v) in cs.iter().zip(vs) {
            if j != i {
                r -= v * x[j];
            }
        }
        x[i] = r / diag[i];
    };
    (0..n).for_each(&mut step);
    (0..n).rev().for_each(&mut step);
}

/// `x ↦ Rᶠx + Π_ff V_Π(Π_ffᵀ x) + C_ff V_C(C_ffᵀ x)` on interface vectors.
pub struct InterfacePrecond {
    target: CsrMatrix,
    diag: Vec<f64>,
    pi_ff: CsrMatrix,
    pi_ff_t: CsrMatrix,
    curl_ff: CsrMatrix,
    curl_ff_t: CsrMatrix,
    amg_pi: AmgHierarchy,
    amg_curl: AmgHierarchy,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterfaceSummary {
    pub size: usize,
    pub smoother: &'static str,
    pub pi_columns: usize,
    pub curl_columns: usize,
    pub amg_pi: AmgStats,
    pub amg_curl: AmgStats,
}

fn check_projected(m: &CsrMatrix, which: &'static str) -> Result<(), PrecondError> {
    match m.diagonal().iter().position(|d| !(*d > 0.0)) {
        Some(row) => Err(PrecondError::ZeroDiagonal { which, row }),
        None => Ok(()),
    }
}

/// Builds the interface preconditioner for `target` (either `S` or `A₁`).
/// `pi_functions` labels the vector component of each column of `pi_ff`.
pub fn build_interface_precond(
    target: &CsrMatrix,
    pi_ff: &CsrMatrix,
    curl_ff: &CsrMatrix,
    params: &AmgParams,
    pi_functions: Option<&[usize]>,
) -> Result<InterfacePrecond, PrecondError> {
    let n = target.nrows();
    if !target.is_square() || pi_ff.nrows() != n || curl_ff.nrows() != n {
        return Err(PrecondError::Dimension(format!(
            "target {}x{}, Π_ff {} rows, C_ff {} rows",
            target.nrows(),
            target.ncols(),
            pi_ff.nrows(),
            curl_ff.nrows()
        )));
    }
    let diag = target.diagonal();
    if let Some(row) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(PrecondError::ZeroDiagonal { which: "target", row });
    }
    let a_pi = target.ptap(pi_ff);
    let a_curl = target.ptap(curl_ff);
    check_projected(&a_pi, "Π")?;
    check_projected(&a_curl, "C")?;
    let amg_pi = amg_setup_systems(&a_pi, pi_functions, params)?;
    let amg_curl = amg_setup(&a_curl, params)?;
    Ok(InterfacePrecond {
        target: target.clone(),
        diag,
        pi_ff_t: pi_ff.transpose(),
        pi_ff: pi_ff.clone(),
        curl_ff_t: curl_ff.transpose(),
        curl_ff: curl_ff.clone(),
        amg_pi,
        amg_curl,
    })
}

impl InterfacePrecond {
    pub fn summary(&self) -> InterfaceSummary {
        InterfaceSummary {
            size: self.target.nrows(),
            smoother: "symmetric Gauss-Seidel",
            pi_columns: self.pi_ff.ncols(),
            curl_columns: self.curl_ff.ncols(),
            amg_pi: self.amg_pi.stats(),
            amg_curl: self.amg_curl.stats(),
        }
    }
}

impl LinearOperator for InterfacePrecond {
    fn dim(&self) -> usize {
        self.target.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        symmetric_gauss_seidel(&self.target, &self.diag, x, y);
        for (op, pt, amg) in [
            (&self.pi_ff, &self.pi_ff_t, &self.amg_pi),
            (&self.curl_ff, &self.curl_ff_t, &self.amg_curl),
        ] {
            let rc = pt.mul_vec(x);
            let mut ec = vec![0.0; rc.len()];
            amg.vcycle(&rc, &mut ec);
            let back = op.mul_vec(&ec);
            for (yi, bi) in y.iter_mut().zip(&back) {
                *yi += bi;
            }
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Interface blocks `Π_ff` and `C_ff` of the auxiliary maps for RT index
/// `k`, with the vector component of each `Π_ff` column.
pub struct AuxiliaryMaps {
    pub pi_ff: CsrMatrix,
    pub curl_ff: CsrMatrix,
    pub pi_functions: Vec<usize>,
    pub rt: FeSpace,
}

pub fn auxiliary_maps(mesh: &Arc<Mesh>, k: usize) -> Result<AuxiliaryMaps, PrecondError> {
    let rt = FeSpace::new(mesh.clone(), Family::RaviartThomas, k)?;
    let lag = FeSpace::new(mesh.clone(), Family::Lagrange, k + 1)?;
    let pi = assemble_pi(&lag, &rt)?;
    let curl = assemble_curl(&lag, &rt)?;
    let f_rt = rt.interface_dofs();
    // columns with no interface moments (e.g. tangential parts of edge
    // bubbles) are decoupled from the interface and dropped
    let f_lag = nonzero_columns(&curl, &f_rt, &lag.interface_dofs());
    let f_vec: Vec<usize> = lag.interface_dofs().iter().flat_map(|&d| [2 * d, 2 * d + 1]).collect();
    let f_vec = nonzero_columns(&pi, &f_rt, &f_vec);
    let pi_functions = f_vec.iter().map(|c| c % 2).collect();
    Ok(AuxiliaryMaps {
        pi_ff: pi.submatrix(&f_rt, &f_vec),
        curl_ff: curl.submatrix(&f_rt, &f_lag),
        pi_functions,
        rt,
    })
}

fn nonzero_columns(m: &CsrMatrix, rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let mut hit = vec![false; m.ncols()];
    for &r in rows {
        let (cs, vs) = m.row(r);
        for (&c, &v) in cs.iter().zip(vs) {
            if v != 0.0 {
                hit[c] = true;
            }
        }
    }
    cols.iter().copied().filter(|&c| hit[c]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Interface block built on the Schur complement of the H(div) Gram.
    Ideal,
    /// Interface block built on `A₁`.
    Practical,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ideal => "ideal",
            Variant::Practical => "practical",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ideal" => Ok(Variant::Ideal),
            "practical" => Ok(Variant::Practical),
            _ => Err(format!("unknown preconditioner variant `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DpgPrecondOptions {
    pub variant: Variant,
    pub amg: AmgParams,
    /// Use `∫κ∇u·∇v` instead of the H¹ Gram for the primal block.
    pub weighted_primal: bool,
}

impl Default for DpgPrecondOptions {
    fn default() -> Self {
        Self { variant: Variant::Practical, amg: AmgParams::default(), weighted_primal: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecondSummary {
    pub variant: Variant,
    pub primal_matrix: &'static str,
    pub primal_amg: AmgStats,
    pub interface_target: &'static str,
    pub interface: InterfaceSummary,
}

/// `diag(Bᵒ, Bᶠ)` acting on `[u_free; q]`.
pub struct DpgPrecond {
    primal: AmgHierarchy,
    interface: InterfacePrecond,
    options: DpgPrecondOptions,
}

pub fn build_dpg_precond(sys: &DpgSystem, options: &DpgPrecondOptions) -> Result<DpgPrecond, PrecondError> {
    let g = if options.weighted_primal {
        assemble_h1_gram(&sys.u_space, Some(&sys.kappa))?
    } else {
        assemble_h1_gram(&sys.u_space, None)?
    };
    let primal = amg_setup(&g, &options.amg)?;
    let k = sys.trial_order() - 1;
    let aux = auxiliary_maps(sys.mesh(), k)?;
    let target = match options.variant {
        Variant::Ideal => {
            let d = assemble_hdiv_gram(&aux.rt)?;
            schur_complement(&d, aux.rt.labels())?.s
        }
        Variant::Practical => sys.assemble_a1(),
    };
    if target.nrows() != sys.num_q() {
        return Err(PrecondError::Dimension(format!(
            "interface target {} vs {} flux DOFs",
            target.nrows(),
            sys.num_q()
        )));
    }
    let interface =
        build_interface_precond(&target, &aux.pi_ff, &aux.curl_ff, &options.amg, Some(&aux.pi_functions))?;
    Ok(DpgPrecond { primal, interface, options: *options })
}

impl DpgPrecond {
    pub fn primal(&self) -> &AmgHierarchy {
        &self.primal
    }

    pub fn interface(&self) -> &InterfacePrecond {
        &self.interface
    }

    pub fn summary(&self) -> PrecondSummary {
        PrecondSummary {
            variant: self.options.variant,
            primal_matrix: if self.options.weighted_primal { "kappa-weighted stiffness" } else { "H1 Gram" },
            primal_amg: self.primal.stats(),
            interface_target: match self.options.variant {
                Variant::Ideal => "Schur complement of the H(div) Gram",
                Variant::Practical => "A1",
            },
            interface: self.interface.summary(),
        }
    }
}

impl LinearOperator for DpgPrecond {
    fn dim(&self) -> usize {
        self.primal.dim() + self.interface.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.primal.dim();
        let (xu, xq) = x.split_at(nu);
        let (yu, yq) = y.split_at_mut(nu);
        self.primal.vcycle(xu, yu);
        self.interface.apply(xq, yq);
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}
