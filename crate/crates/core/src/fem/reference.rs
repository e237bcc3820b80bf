//! Reference elements: geometry maps, nodal Lagrange bases and
//! Raviart–Thomas bases, each built as the dual basis of a polynomial spanning set.

use nalgebra::DMatrix;

use super::quadrature::{gauss_legendre, shifted_legendre, shifted_legendre_with_derivative, QuadratureRule};
use crate::mesh::ElementKind;

pub fn reference_vertices(kind: ElementKind) -> &'static [[f64; 2]] {
    match kind {
        ElementKind::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        ElementKind::Quadrilateral => &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    }
}

/// Point at parameter `t` along reference edge `j` (from vertex `j` to `j+1`).
pub fn reference_edge_point(kind: ElementKind, j: usize, t: f64) -> [f64; 2] {
    let v = reference_vertices(kind);
    let (a, b) = (v[j], v[(j + 1) % v.len()]);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `rot(b − a)` for reference edge `j`: outward normal times edge length.
pub fn reference_edge_normal(kind: ElementKind, j: usize) -> [f64; 2] {
    let v = reference_vertices(kind);
    let (a, b) = (v[j], v[(j + 1) % v.len()]);
    [b[1] - a[1], -(b[0] - a[0])]
}

/// Affine (triangle) or bilinear (quadrilateral) map from the reference element.
#[derive(Debug, Clone)]
pub struct ElementMap {
    kind: ElementKind,
    c: Vec<[f64; 2]>,
}

impl ElementMap {
    pub fn new(kind: ElementKind, coords: Vec<[f64; 2]>) -> Self {
        assert_eq!(coords.len(), kind.num_vertices());
        Self { kind, c: coords }
    }

    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let c = &self.c;
        match self.kind {
            ElementKind::Triangle => [
                c[0][0] + xi[0] * (c[1][0] - c[0][0]) + xi[1] * (c[2][0] - c[0][0]),
                c[0][1] + xi[0] * (c[1][1] - c[0][1]) + xi[1] * (c[2][1] - c[0][1]),
            ],
            ElementKind::Quadrilateral => {
                let (s, t) = (xi[0], xi[1]);
                let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                let mut x = [0.0; 2];
                for i in 0..4 {
                    x[0] += w[i] * c[i][0];
                    x[1] += w[i] * c[i][1];
                }
                x
            }
        }
    }

    /// `J[r][c] = ∂x_r / ∂ξ_c`.
    pub fn jacobian(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let c = &self.c;
        match self.kind {
            ElementKind::Triangle => [
                [c[1][0] - c[0][0], c[2][0] - c[0][0]],
                [c[1][1] - c[0][1], c[2][1] - c[0][1]],
            ],
            ElementKind::Quadrilateral => {
                let (s, t) = (xi[0], xi[1]);
                let ds = [-(1.0 - t), 1.0 - t, t, -t];
                let dt = [-(1.0 - s), -s, s, 1.0 - s];
                let mut j = [[0.0; 2]; 2];
                for i in 0..4 {
                    for r in 0..2 {
                        j[r][0] += ds[i] * c[i][r];
                        j[r][1] += dt[i] * c[i][r];
                    }
                }
                j
            }
        }
    }
}

pub fn det2(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// `J⁻ᵀ g`.
pub fn inv_transpose_apply(j: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    let d = det2(j);
    [(j[1][1] * g[0] - j[1][0] * g[1]) / d, (-j[0][1] * g[0] + j[0][0] * g[1]) / d]
}

/// Contravariant Piola push-forward `J σ̂ / det J`.
pub fn piola(j: &[[f64; 2]; 2], s: [f64; 2]) -> [f64; 2] {
    let d = det2(j);
    [(j[0][0] * s[0] + j[0][1] * s[1]) / d, (j[1][0] * s[0] + j[1][1] * s[1]) / d]
}

/// `det J · J⁻¹ σ`: pull-back of a physical field to the reference element.
pub fn piola_pullback(j: &[[f64; 2]; 2], s: [f64; 2]) -> [f64; 2] {
    [j[1][1] * s[0] - j[0][1] * s[1], -j[1][0] * s[0] + j[0][0] * s[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Vertex(usize),
    /// Node `pos` (0-based, from the start vertex) on local edge `edge`.
    Edge { edge: usize, pos: usize },
    Interior(usize),
}

/// Nodal Lagrange element of degree `k` on equispaced nodes. Local order:
/// vertices, then edge nodes edge by edge along the local edge direction,
/// then interior nodes.
#[derive(Debug, Clone)]
pub struct LagrangeRef {
    kind: ElementKind,
    degree: usize,
    nodes: Vec<[f64; 2]>,
    classes: Vec<NodeClass>,
    exps: Vec<(i32, i32)>,
    coef: DMatrix<f64>,
}

impl LagrangeRef {
    pub fn new(kind: ElementKind, degree: usize) -> Self {
        assert!(degree >= 1);
        let k = degree;
        let kf = k as f64;
        let nv = kind.num_vertices();
        let mut nodes = Vec::new();
        let mut classes = Vec::new();
        for (j, v) in reference_vertices(kind).iter().enumerate() {
            nodes.push(*v);
            classes.push(NodeClass::Vertex(j));
        }
        for j in 0..nv {
            for pos in 0..k - 1 {
                nodes.push(reference_edge_point(kind, j, (pos + 1) as f64 / kf));
                classes.push(NodeClass::Edge { edge: j, pos });
            }
        }
        let mut n_int = 0;
        match kind {
            ElementKind::Triangle => {
                for jj in 1..k {
                    for ii in 1..k {
                        if ii + jj < k {
                            nodes.push([ii as f64 / kf, jj as f64 / kf]);
                            classes.push(NodeClass::Interior(n_int));
                            n_int += 1;
                        }
                    }
                }
            }
            ElementKind::Quadrilateral => {
                for jj in 1..k {
                    for ii in 1..k {
                        nodes.push([ii as f64 / kf, jj as f64 / kf]);
                        classes.push(NodeClass::Interior(n_int));
                        n_int += 1;
                    }
                }
            }
        }

        let mut exps = Vec::new();
        for b in 0..=k as i32 {
            for a in 0..=k as i32 {
                if kind == ElementKind::Quadrilateral || a + b <= k as i32 {
                    exps.push((a, b));
                }
            }
        }
        let n = nodes.len();
        assert_eq!(exps.len(), n);
        let v = DMatrix::from_fn(n, n, |i, m| legendre2(exps[m].0, exps[m].1, nodes[i]));
        let coef = v.try_inverse().expect("Lagrange Vandermonde matrix is invertible");
        Self { kind, degree, nodes, classes, exps, coef }
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndofs(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn num_interior(&self) -> usize {
        self.classes.iter().filter(|c| matches!(c, NodeClass::Interior(_))).count()
    }

    pub fn eval(&self, x: [f64; 2], out: &mut [f64]) {
        let m: Vec<f64> = self.exps.iter().map(|&(a, b)| legendre2(a, b, x)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..m.len()).map(|r| m[r] * self.coef[(r, i)]).sum();
        }
    }

    pub fn eval_grad(&self, x: [f64; 2], out: &mut [[f64; 2]]) {
        let g: Vec<[f64; 2]> = self.exps.iter().map(|&(a, b)| legendre2_grad(a, b, x)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = [0.0; 2];
            for (r, gr) in g.iter().enumerate() {
                s[0] += gr[0] * self.coef[(r, i)];
                s[1] += gr[1] * self.coef[(r, i)];
            }
            *o = s;
        }
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let n = self.ndofs();
        let mut values = vec![0.0; points.len() * n];
        let mut grads = vec![[0.0; 2]; points.len() * n];
        for (q, &x) in points.iter().enumerate() {
            self.eval(x, &mut values[q * n..(q + 1) * n]);
            self.eval_grad(x, &mut grads[q * n..(q + 1) * n]);
        }
        Tabulation { n, values, grads }
    }
}

/// Basis values and reference gradients at a fixed point set.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n..(q + 1) * self.n]
    }
    pub fn grads_at(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n..(q + 1) * self.n]
    }
}

/// `L_a(x) L_b(y)`.
pub fn legendre2(a: i32, b: i32, x: [f64; 2]) -> f64 {
    shifted_legendre(a as usize, x[0]) * shifted_legendre(b as usize, x[1])
}

fn legendre2_grad(a: i32, b: i32, x: [f64; 2]) -> [f64; 2] {
    let (la, da) = shifted_legendre_with_derivative(a as usize, x[0]);
    let (lb, db) = shifted_legendre_with_derivative(b as usize, x[1]);
    [da * lb, la * db]
}

/// Vector spanning function: `Σ (x_c)^s L_a(x) L_b(y) e_c` over the terms
/// `(c, a, b, s)`, where `s ∈ {0, 1}` multiplies by the `c`-th coordinate.
type VecMono = Vec<(usize, i32, i32, i32)>;

fn vmono_eval(m: &VecMono, x: [f64; 2]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for &(c, a, b, s) in m {
        v[c] += x[c].powi(s) * legendre2(a, b, x);
    }
    v
}

fn vmono_div(m: &VecMono, x: [f64; 2]) -> f64 {
    m.iter()
        .map(|&(c, a, b, s)| {
            let g = legendre2_grad(a, b, x)[c];
            if s == 0 {
                g
            } else {
                legendre2(a, b, x) + x[c] * g
            }
        })
        .sum()
}

/// Raviart–Thomas element of index `k`. Local DOFs: for each edge `j` the
/// moments `∫ σ·n̂ L_m(t) dŝ`, `m = 0..=k` (index `j(k+1)+m`), then interior
/// moments against a monomial basis of the lower-degree space.
#[derive(Debug, Clone)]
pub struct RtRef {
    kind: ElementKind,
    k: usize,
    span: Vec<VecMono>,
    coef: DMatrix<f64>,
}

impl RtRef {
    pub fn new(kind: ElementKind, k: usize) -> Self {
        let ki = k as i32;
        let mut span: Vec<VecMono> = Vec::new();
        match kind {
            ElementKind::Triangle => {
                for c in 0..2 {
                    for b in 0..=ki {
                        for a in 0..=ki - b {
                            span.push(vec![(c, a, b, 0)]);
                        }
                    }
                }
                for b in 0..=ki {
                    let a = ki - b;
                    span.push(vec![(0, a, b, 1), (1, a, b, 1)]);
                }
            }
            ElementKind::Quadrilateral => {
                for b in 0..=ki {
                    for a in 0..=ki + 1 {
                        span.push(vec![(0, a, b, 0)]);
                    }
                }
                for b in 0..=ki + 1 {
                    for a in 0..=ki {
                        span.push(vec![(1, a, b, 0)]);
                    }
                }
            }
        }
        let n = span.len();
        let mut dmat = DMatrix::zeros(n, n);
        for (col, m) in span.iter().enumerate() {
            let dofs = rt_reference_dofs(kind, k, &|x| vmono_eval(m, x));
            assert_eq!(dofs.len(), n);
            for (row, v) in dofs.into_iter().enumerate() {
                dmat[(row, col)] = v;
            }
        }
        let coef = dmat.try_inverse().expect("RT DOF matrix is invertible");
        Self { kind, k, span, coef }
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn index(&self) -> usize {
        self.k
    }

    pub fn ndofs(&self) -> usize {
        self.span.len()
    }

    pub fn num_edge_dofs(&self) -> usize {
        self.kind.num_vertices() * (self.k + 1)
    }

    pub fn num_interior(&self) -> usize {
        self.ndofs() - self.num_edge_dofs()
    }

    /// Reference basis values and divergences at `x`.
    pub fn eval(&self, x: [f64; 2], vals: &mut [[f64; 2]], divs: &mut [f64]) {
        let sv: Vec<[f64; 2]> = self.span.iter().map(|m| vmono_eval(m, x)).collect();
        let sd: Vec<f64> = self.span.iter().map(|m| vmono_div(m, x)).collect();
        for i in 0..self.ndofs() {
            let mut v = [0.0; 2];
            let mut d = 0.0;
            for r in 0..sv.len() {
                let c = self.coef[(r, i)];
                v[0] += c * sv[r][0];
                v[1] += c * sv[r][1];
                d += c * sd[r];
            }
            vals[i] = v;
            divs[i] = d;
        }
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> RtTabulation {
        let n = self.ndofs();
        let mut values = vec![[0.0; 2]; points.len() * n];
        let mut divs = vec![0.0; points.len() * n];
        for (q, &x) in points.iter().enumerate() {
            self.eval(x, &mut values[q * n..(q + 1) * n], &mut divs[q * n..(q + 1) * n]);
        }
        RtTabulation { n, values, divs }
    }
}

#[derive(Debug, Clone)]
pub struct RtTabulation {
    pub n: usize,
    pub values: Vec<[f64; 2]>,
    pub divs: Vec<f64>,
}

impl RtTabulation {
    pub fn values_at(&self, q: usize) -> &[[f64; 2]] {
        &self.values[q * self.n..(q + 1) * self.n]
    }
    pub fn divs_at(&self, q: usize) -> &[f64] {
        &self.divs[q * self.n..(q + 1) * self.n]
    }
}

/// Interior-moment test functions of RT index `k`: `(component, a, b)` for
/// `L_a(x) L_b(y) e_component`.
pub fn rt_interior_moments(kind: ElementKind, k: usize) -> Vec<(usize, i32, i32)> {
    let ki = k as i32;
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    match kind {
        ElementKind::Triangle => {
            for c in 0..2 {
                for b in 0..ki {
                    for a in 0..ki - b {
                        out.push((c, a, b));
                    }
                }
            }
        }
        ElementKind::Quadrilateral => {
            for b in 0..=ki {
                for a in 0..ki {
                    out.push((0, a, b));
                }
            }
            for b in 0..ki {
                for a in 0..=ki {
                    out.push((1, a, b));
                }
            }
        }
    }
    out
}

/// The RT degrees of freedom of a reference vector field, by quadrature
/// exact for polynomial fields of RT index `k`.
pub fn rt_reference_dofs(kind: ElementKind, k: usize, field: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let nv = kind.num_vertices();
    let (t, w) = gauss_legendre(k + 3);
    let mut out = Vec::new();
    for j in 0..nv {
        let n = reference_edge_normal(kind, j);
        for m in 0..=k {
            let mut s = 0.0;
            for (ti, wi) in t.iter().zip(&w) {
                let v = field(reference_edge_point(kind, j, *ti));
                s += wi * (v[0] * n[0] + v[1] * n[1]) * shifted_legendre(m, *ti);
            }
            out.push(s);
        }
    }
    let rule = QuadratureRule::new(kind, k + 3);
    let moments = rt_interior_moments(kind, k);
    let fvals: Vec<[f64; 2]> = rule.points.iter().map(|&x| field(x)).collect();
    for &(c, a, b) in &moments {
        let mut s = 0.0;
        for (q, &x) in rule.points.iter().enumerate() {
            s += rule.weights[q] * fvals[q][c] * legendre2(a, b, x);
        }
        out.push(s);
    }
    out
}
