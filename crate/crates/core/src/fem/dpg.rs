use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::assembly::{check_kappa, element_map, lagrange_element_matrix, push_symmetric};
use super::quadrature::{gauss_legendre, shifted_legendre, QuadratureRule};
use super::reference::{det2, inv_transpose_apply, reference_edge_point, LagrangeRef};
use super::space::{Family, FeSpace};
use super::FemError;
use crate::linalg::{mmio, CsrMatrix, LinalgError, LinearOperator, TripletBuilder};
use crate::mesh::Mesh;

/// Packed lower Cholesky factor of one SPD element block.
#[derive(Debug, Clone)]
struct Chol {
    n: usize,
    l: Vec<f64>,
}

impl Chol {
    fn new(a: &[f64], n: usize) -> Option<Chol> {
        // `a` is row-major with the upper triangle filled
        let mut l = vec![0.0; n * (n + 1) / 2];
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[j * n + i];
                for k in 0..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[idx(i, i)] = s.sqrt();
                } else {
                    l[idx(i, j)] = s / l[idx(j, j)];
                }
            }
        }
        Some(Chol { n, l })
    }

    /// In place `x ← L⁻¹ x`.
    fn forward(&self, x: &mut [f64]) {
        let n = self.n;
        let mut p = 0;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[p + k] * x[k];
            }
            x[i] = s / self.l[p + i];
            p += i + 1;
        }
    }

    /// In place `x ← L⁻ᵀ x`.
    fn backward(&self, x: &mut [f64]) {
        let n = self.n;
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[idx(k, i)] * x[k];
            }
            x[i] = s / self.l[idx(i, i)];
        }
    }

    fn solve(&self, x: &mut [f64]) {
        self.forward(x);
        self.backward(x);
    }
}

/// The assembled primal DPG system with Dirichlet DOFs of `U_h` eliminated.
///
/// Unknown vector layout: free `U_h` coefficients first, then all `Q_h`
/// coefficients.
#[derive(Debug, Clone)]
pub struct DpgSystem {
    pub u_space: FeSpace,
    pub q_space: FeSpace,
    pub y_space: FeSpace,
    /// `Y_h × U_h` (free columns only).
    pub b0: CsrMatrix,
    /// `Y_h × Q_h`.
    pub b1: CsrMatrix,
    /// Load vector on `Y_h`.
    pub f: Vec<f64>,
    /// Eliminated boundary DOFs of `U_h`.
    pub bc: Vec<usize>,
    /// Free `U_h` DOFs in increasing order.
    pub u_free: Vec<usize>,
    pub kappa: Vec<f64>,
    chol: Vec<Chol>,
    ny_loc: usize,
}

/// Which block of `A = BᵀM⁻¹B` to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Full,
    A0,
    A1,
}

/// Primal DPG system for `−div(κ∇u) = f`, `u = 0` on the boundary, with
/// trial order `p`, flux order `p − 1` and test order `r`.
pub fn assemble_dpg(
    mesh: Arc<Mesh>,
    p: usize,
    r: usize,
    kappa: &[f64],
    f: &dyn Fn([f64; 2]) -> f64,
) -> Result<DpgSystem, FemError> {
    if r < p {
        return Err(FemError::TestOrderTooLow { p, r });
    }
    if p == 0 {
        return Err(FemError::UnsupportedDegree { family: Family::Lagrange, degree: 0 });
    }
    check_kappa(&mesh, kappa)?;
    let kind = mesh.kind();
    let u_space = FeSpace::new(mesh.clone(), Family::Lagrange, p)?;
    let q_space = FeSpace::new(mesh.clone(), Family::FacetTrace, p - 1)?;
    let y_space = FeSpace::new(mesh.clone(), Family::BrokenLagrange, r)?;
    let k = p - 1;

    let u_ref = LagrangeRef::new(kind, p);
    let y_ref = LagrangeRef::new(kind, r);
    let nu = u_ref.ndofs();
    let ny = y_ref.ndofs();
    let nq = q_space.nloc();
    let rule = QuadratureRule::for_shape_degree(kind, r);
    let u_tab = u_ref.tabulate(&rule.points);
    let y_tab = y_ref.tabulate(&rule.points);

    // (2m+1) ∫₀¹ L_m(t) v_a(edge_j(t)) dt on the reference element
    let nv = kind.num_vertices();
    let (t, w) = gauss_legendre(r + k + 2);
    let mut edge_tab = vec![0.0; nv * ny * (k + 1)];
    let mut vals = vec![0.0; ny];
    for j in 0..nv {
        for (ti, wi) in t.iter().zip(&w) {
            y_ref.eval(reference_edge_point(kind, j, *ti), &mut vals);
            for a in 0..ny {
                for m in 0..=k {
                    edge_tab[(j * ny + a) * (k + 1) + m] += wi * (2 * m + 1) as f64 * shifted_legendre(m, *ti) * vals[a];
                }
            }
        }
    }

    let free_map = u_space.free_index_map();
    let u_free: Vec<usize> = u_space.free_dofs();
    let bc = u_space.boundary_dofs();
    let ne = mesh.num_elements();
    let mut tb0 = TripletBuilder::with_capacity(y_space.ndofs(), u_free.len(), ne * ny * nu);
    let mut tb1 = TripletBuilder::with_capacity(y_space.ndofs(), q_space.ndofs(), ne * ny * nq);
    let mut load = vec![0.0; y_space.ndofs()];
    let mut chol = Vec::with_capacity(ne);
    let mut me = vec![0.0; ny * ny];
    let mut gu = vec![[0.0; 2]; nu];
    let mut gy = vec![[0.0; 2]; ny];
    let mut b0e = vec![0.0; ny * nu];
    for e in 0..ne {
        let map = element_map(&mesh, e);
        lagrange_element_matrix(&map, &rule, &y_tab, 1.0, 1.0, &mut me);
        chol.push(Chol::new(&me, ny).ok_or(FemError::SingularBlock { element: e })?);

        b0e.iter_mut().for_each(|v| *v = 0.0);
        let ydofs = y_space.element_dofs(e);
        for (qp, &xi) in rule.points.iter().enumerate() {
            let jac = map.jacobian(xi);
            let wq = rule.weights[qp] * det2(&jac);
            for (g, rg) in gu.iter_mut().zip(u_tab.grads_at(qp)) {
                *g = inv_transpose_apply(&jac, *rg);
            }
            for (g, rg) in gy.iter_mut().zip(y_tab.grads_at(qp)) {
                *g = inv_transpose_apply(&jac, *rg);
            }
            let fx = f(map.map(xi));
            let yv = y_tab.values_at(qp);
            for a in 0..ny {
                load[ydofs[a]] += wq * fx * yv[a];
                for b in 0..nu {
                    b0e[a * nu + b] += wq * kappa[e] * (gy[a][0] * gu[b][0] + gy[a][1] * gu[b][1]);
                }
            }
        }
        let udofs = u_space.element_dofs(e);
        for a in 0..ny {
            for b in 0..nu {
                if let Some(c) = free_map[udofs[b]] {
                    tb0.push(ydofs[a], c, b0e[a * nu + b]);
                }
            }
        }

        let qdofs = q_space.element_dofs(e);
        let qsigns = q_space.element_signs(e);
        for j in 0..nv {
            for m in 0..=k {
                let lq = j * (k + 1) + m;
                for a in 0..ny {
                    let v = edge_tab[(j * ny + a) * (k + 1) + m];
                    if v != 0.0 {
                        tb1.push(ydofs[a], qdofs[lq], qsigns[lq] * v);
                    }
                }
            }
        }
    }

    Ok(DpgSystem {
        u_space,
        q_space,
        y_space,
        b0: tb0.build(),
        b1: tb1.build(),
        f: load,
        bc,
        u_free,
        kappa: kappa.to_vec(),
        chol,
        ny_loc: ny,
    })
}

impl DpgSystem {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.y_space.mesh()
    }

    pub fn trial_order(&self) -> usize {
        self.u_space.degree()
    }

    pub fn test_order(&self) -> usize {
        self.y_space.degree()
    }

    pub fn num_u(&self) -> usize {
        self.u_free.len()
    }

    pub fn num_q(&self) -> usize {
        self.q_space.ndofs()
    }

    pub fn num_y(&self) -> usize {
        self.y_space.ndofs()
    }

    pub fn dim(&self) -> usize {
        self.num_u() + self.num_q()
    }

    /// In place `y ← M⁻¹ y` on `Y_h`.
    pub fn apply_m_inv(&self, y: &mut [f64]) {
        let n = self.ny_loc;
        for (e, c) in self.chol.iter().enumerate() {
            c.solve(&mut y[e * n..(e + 1) * n]);
        }
    }

    /// Dense H¹(K) Gram block of element `e`, recomputed from scratch.
    pub fn m_block(&self, e: usize) -> DMatrix<f64> {
        let kind = self.mesh().kind();
        let r = self.test_order();
        let y_ref = LagrangeRef::new(kind, r);
        let rule = QuadratureRule::for_shape_degree(kind, r);
        let tab = y_ref.tabulate(&rule.points);
        let n = y_ref.ndofs();
        let mut me = vec![0.0; n * n];
        lagrange_element_matrix(&element_map(self.mesh(), e), &rule, &tab, 1.0, 1.0, &mut me);
        DMatrix::from_fn(n, n, |i, j| if i <= j { me[i * n + j] } else { me[j * n + i] })
    }

    /// `(M v, v)` with `M` from freshly assembled element blocks.
    pub fn m_norm_sq(&self, v: &[f64]) -> f64 {
        let n = self.ny_loc;
        let mut s = 0.0;
        for e in 0..self.mesh().num_elements() {
            let m = self.m_block(e);
            let ve = nalgebra::DVector::from_column_slice(&v[e * n..(e + 1) * n]);
            s += ve.dot(&(&m * &ve));
        }
        s
    }

    /// `B x` for `x = [u; q]`.
    pub fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.num_u();
        self.b0.matvec(&x[..nu], y);
        let mut t = vec![0.0; self.num_y()];
        self.b1.matvec(&x[nu..], &mut t);
        for (yi, ti) in y.iter_mut().zip(&t) {
            *yi += ti;
        }
    }

    /// `Bᵀ y` into `x = [u; q]`.
    pub fn apply_bt(&self, y: &[f64], x: &mut [f64]) {
        let nu = self.num_u();
        let (xu, xq) = x.split_at_mut(nu);
        self.b0.matvec_transpose(y, xu);
        self.b1.matvec_transpose(y, xq);
    }

    /// Right-hand side `g = BᵀM⁻¹F`.
    pub fn rhs(&self) -> Vec<f64> {
        let mut z = self.f.clone();
        self.apply_m_inv(&mut z);
        let mut g = vec![0.0; self.dim()];
        self.apply_bt(&z, &mut g);
        g
    }

    pub fn operator(&self) -> DpgOperator<'_> {
        DpgOperator { sys: self, part: Part::Full }
    }

    pub fn operator_part(&self, part: Part) -> DpgOperator<'_> {
        DpgOperator { sys: self, part }
    }

    /// `Bᵀ_a M⁻¹ B_b` summed element by element; exactly symmetric when `a == b`.
    fn explicit_product(&self, b: &CsrMatrix) -> CsrMatrix {
        let n = self.ny_loc;
        let ne = self.mesh().num_elements();
        let mut tb = TripletBuilder::new(b.ncols(), b.ncols());
        for e in 0..ne {
            // columns touched by this element's rows
            let mut cols: Vec<usize> = Vec::new();
            for row in e * n..(e + 1) * n {
                cols.extend_from_slice(b.row(row).0);
            }
            cols.sort_unstable();
            cols.dedup();
            let nc = cols.len();
            // X = L⁻¹ B_e, column by column
            let mut x = vec![0.0; nc * n];
            for (ci, &c) in cols.iter().enumerate() {
                let col = &mut x[ci * n..(ci + 1) * n];
                for (li, row) in (e * n..(e + 1) * n).enumerate() {
                    col[li] = b.get(row, c);
                }
                self.chol[e].forward(col);
            }
            let mut ke = vec![0.0; nc * nc];
            for a in 0..nc {
                for bb in a..nc {
                    let s: f64 = (0..n).map(|l| x[a * n + l] * x[bb * n + l]).sum();
                    ke[a * nc + bb] = s;
                }
            }
            let rows: Vec<Option<usize>> = cols.iter().map(|&c| Some(c)).collect();
            push_symmetric(&mut tb, &rows, &ke, nc);
        }
        tb.build()
    }

    /// `A₀ = B₀ᵀM⁻¹B₀` formed explicitly.
    pub fn assemble_a0(&self) -> CsrMatrix {
        self.explicit_product(&self.b0)
    }

    /// `A₁ = B₁ᵀM⁻¹B₁` formed explicitly.
    pub fn assemble_a1(&self) -> CsrMatrix {
        self.explicit_product(&self.b1)
    }

    /// Block-diagonal `M` as a sparse matrix.
    pub fn assemble_m(&self) -> CsrMatrix {
        let n = self.ny_loc;
        let mut tb = TripletBuilder::new(self.num_y(), self.num_y());
        for e in 0..self.mesh().num_elements() {
            let m = self.m_block(e);
            for i in 0..n {
                for j in 0..n {
                    tb.push(e * n + i, e * n + j, m[(i, j)]);
                }
            }
        }
        tb.build()
    }

    /// Expands free `U_h` coefficients with zeros on the boundary.
    pub fn u_full(&self, u_free: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.u_space.ndofs()];
        for (i, &d) in self.u_free.iter().enumerate() {
            u[d] = u_free[i];
        }
        u
    }

    /// `(‖u − u*‖²_{L²}, |u − u*|²_{H¹})` for `u` given by free coefficients.
    pub fn u_errors(
        &self,
        u_free: &[f64],
        exact: &dyn Fn([f64; 2]) -> f64,
        grad: &dyn Fn([f64; 2]) -> [f64; 2],
    ) -> (f64, f64) {
        let mesh = self.mesh();
        let p = self.trial_order();
        let refel = LagrangeRef::new(mesh.kind(), p);
        let rule = QuadratureRule::new(mesh.kind(), p + 5);
        let tab = refel.tabulate(&rule.points);
        let u = self.u_full(u_free);
        let (mut l2, mut h1) = (0.0, 0.0);
        for e in 0..mesh.num_elements() {
            let map = element_map(mesh, e);
            let dofs = self.u_space.element_dofs(e);
            for (qp, &xi) in rule.points.iter().enumerate() {
                let jac = map.jacobian(xi);
                let w = rule.weights[qp] * det2(&jac);
                let x = map.map(xi);
                let mut uh = 0.0;
                let mut gh = [0.0; 2];
                for (a, &d) in dofs.iter().enumerate() {
                    uh += u[d] * tab.values_at(qp)[a];
                    let g = inv_transpose_apply(&jac, tab.grads_at(qp)[a]);
                    gh[0] += u[d] * g[0];
                    gh[1] += u[d] * g[1];
                }
                let ge = grad(x);
                l2 += w * (uh - exact(x)).powi(2);
                h1 += w * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
            }
        }
        (l2, h1)
    }

    /// MatrixMarket files for `B₀, B₁, M, A₀, A₁` and text vectors `F, g`.
    pub fn export(&self, dir: &Path) -> Result<(), LinalgError> {
        std::fs::create_dir_all(dir)?;
        mmio::write_matrix_market(dir.join("B0.mtx"), &self.b0)?;
        mmio::write_matrix_market(dir.join("B1.mtx"), &self.b1)?;
        mmio::write_matrix_market(dir.join("M.mtx"), &self.assemble_m())?;
        mmio::write_matrix_market(dir.join("A0.mtx"), &self.assemble_a0())?;
        mmio::write_matrix_market(dir.join("A1.mtx"), &self.assemble_a1())?;
        mmio::write_vector(dir.join("F.txt"), &self.f)?;
        mmio::write_vector(dir.join("g.txt"), &self.rhs())?;
        Ok(())
    }
}

/// Implicit `A = BᵀM⁻¹B` or one of its diagonal blocks.
pub struct DpgOperator<'a> {
    sys: &'a DpgSystem,
    part: Part,
}

impl LinearOperator for DpgOperator<'_> {
    fn dim(&self) -> usize {
        match self.part {
            Part::Full => self.sys.dim(),
            Part::A0 => self.sys.num_u(),
            Part::A1 => self.sys.num_q(),
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let s = self.sys;
        let mut y = vec![0.0; s.num_y()];
        match self.part {
            Part::Full => s.apply_b(x, &mut y),
            Part::A0 => s.b0.matvec(x, &mut y),
            Part::A1 => s.b1.matvec(x, &mut y),
        }
        s.apply_m_inv(&mut y);
        match self.part {
            Part::Full => s.apply_bt(&y, out),
            Part::A0 => s.b0.matvec_transpose(&y, out),
            Part::A1 => s.b1.matvec_transpose(&y, out),
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}
