use super::quadrature::{gauss_legendre, shifted_legendre, QuadratureRule};
use super::reference::{
    det2, inv_transpose_apply, legendre2, piola, piola_pullback, rt_interior_moments, rt_reference_dofs, ElementMap,
    LagrangeRef, RtRef,
};
use super::space::{Family, FeSpace};
use super::FemError;
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::Mesh;

pub(crate) fn element_map(mesh: &Mesh, e: usize) -> ElementMap {
    ElementMap::new(mesh.kind(), mesh.element_coords(e))
}

fn expect_family(space: &FeSpace, family: Family) -> Result<(), FemError> {
    if space.family() != family {
        return Err(FemError::FamilyMismatch { expected: family, got: space.family() });
    }
    Ok(())
}

/// Pushes a symmetric element matrix given by its upper triangle so that
/// mirrored global entries receive bitwise identical sums.
pub(crate) fn push_symmetric(
    tb: &mut TripletBuilder,
    rows: &[Option<usize>],
    ke: &[f64],
    n: usize,
) {
    for i in 0..n {
        let Some(gi) = rows[i] else { continue };
        for j in 0..n {
            let Some(gj) = rows[j] else { continue };
            let v = if i <= j { ke[i * n + j] } else { ke[j * n + i] };
            tb.push(gi, gj, v);
        }
    }
}

/// Element matrix of `∫ c∇u·∇v + m u v` for a Lagrange-type reference element,
/// upper triangle filled (row-major, `n × n`).
pub(crate) fn lagrange_element_matrix(
    map: &ElementMap,
    rule: &QuadratureRule,
    tab: &super::reference::Tabulation,
    stiff: f64,
    mass: f64,
    out: &mut [f64],
) {
    let n = tab.n;
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut grads = vec![[0.0; 2]; n];
    for (q, &xi) in rule.points.iter().enumerate() {
        let j = map.jacobian(xi);
        let w = rule.weights[q] * det2(&j);
        let vals = tab.values_at(q);
        for (g, rg) in grads.iter_mut().zip(tab.grads_at(q)) {
            *g = inv_transpose_apply(&j, *rg);
        }
        for a in 0..n {
            for b in a..n {
                out[a * n + b] +=
                    w * (stiff * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]) + mass * vals[a] * vals[b]);
            }
        }
    }
}

/// Gram matrix on the free (non-boundary) DOFs of a Lagrange space:
/// `∫ ∇u·∇v + u v` when `kappa` is `None`, otherwise `∫ κ∇u·∇v`.
pub fn assemble_h1_gram(space: &FeSpace, kappa: Option<&[f64]>) -> Result<CsrMatrix, FemError> {
    expect_family(space, Family::Lagrange)?;
    let mesh = space.mesh();
    if let Some(k) = kappa {
        check_kappa(mesh, k)?;
    }
    let refel = LagrangeRef::new(mesh.kind(), space.degree());
    let rule = QuadratureRule::for_shape_degree(mesh.kind(), space.degree());
    let tab = refel.tabulate(&rule.points);
    let n = refel.ndofs();
    let free = space.free_index_map();
    let nfree = free.iter().filter(|f| f.is_some()).count();
    let mut tb = TripletBuilder::with_capacity(nfree, nfree, mesh.num_elements() * n * n);
    let mut ke = vec![0.0; n * n];
    for e in 0..mesh.num_elements() {
        let (stiff, mass) = match kappa {
            Some(k) => (k[e], 0.0),
            None => (1.0, 1.0),
        };
        lagrange_element_matrix(&element_map(mesh, e), &rule, &tab, stiff, mass, &mut ke);
        let rows: Vec<Option<usize>> = space.element_dofs(e).iter().map(|&d| free[d]).collect();
        push_symmetric(&mut tb, &rows, &ke, n);
    }
    Ok(tb.build())
}

pub(crate) fn check_kappa(mesh: &Mesh, kappa: &[f64]) -> Result<(), FemError> {
    if kappa.len() != mesh.num_elements() {
        return Err(FemError::MeshMismatch(format!(
            "{} coefficient values for {} elements",
            kappa.len(),
            mesh.num_elements()
        )));
    }
    for (e, &k) in kappa.iter().enumerate() {
        if !(k > 0.0) || !k.is_finite() {
            return Err(FemError::NonpositiveCoefficient { element: e, value: k });
        }
    }
    Ok(())
}

/// Local H(div) Gram `∫ σ·τ + div σ div τ` in the signed global orientation,
/// upper triangle filled.
pub(crate) fn rt_element_matrix(
    map: &ElementMap,
    rule: &QuadratureRule,
    tab: &super::reference::RtTabulation,
    signs: &[f64],
    out: &mut [f64],
) {
    let n = tab.n;
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut vals = vec![[0.0; 2]; n];
    let mut divs = vec![0.0; n];
    for (q, &xi) in rule.points.iter().enumerate() {
        let j = map.jacobian(xi);
        let dj = det2(&j);
        let w = rule.weights[q] * dj;
        for a in 0..n {
            vals[a] = piola(&j, tab.values_at(q)[a]);
            divs[a] = tab.divs_at(q)[a] / dj;
        }
        for a in 0..n {
            for b in a..n {
                out[a * n + b] += w * (vals[a][0] * vals[b][0] + vals[a][1] * vals[b][1] + divs[a] * divs[b]);
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            out[a * n + b] *= signs[a] * signs[b];
        }
    }
}

/// H(div) Gram matrix over all RT DOFs.
pub fn assemble_hdiv_gram(space: &FeSpace) -> Result<CsrMatrix, FemError> {
    expect_family(space, Family::RaviartThomas)?;
    let mesh = space.mesh();
    let refel = RtRef::new(mesh.kind(), space.degree());
    let rule = QuadratureRule::for_shape_degree(mesh.kind(), space.degree() + 1);
    let tab = refel.tabulate(&rule.points);
    let n = refel.ndofs();
    let mut tb = TripletBuilder::with_capacity(space.ndofs(), space.ndofs(), mesh.num_elements() * n * n);
    let mut ke = vec![0.0; n * n];
    for e in 0..mesh.num_elements() {
        rt_element_matrix(&element_map(mesh, e), &rule, &tab, space.element_signs(e), &mut ke);
        let rows: Vec<Option<usize>> = space.element_dofs(e).iter().map(|&d| Some(d)).collect();
        push_symmetric(&mut tb, &rows, &ke, n);
    }
    Ok(tb.build())
}

fn check_pair(lag: &FeSpace, rt: &FeSpace) -> Result<(), FemError> {
    expect_family(lag, Family::Lagrange)?;
    expect_family(rt, Family::RaviartThomas)?;
    if !std::sync::Arc::ptr_eq(lag.mesh(), rt.mesh()) {
        return Err(FemError::MeshMismatch("spaces live on different meshes".into()));
    }
    if lag.degree() != rt.degree() + 1 {
        return Err(FemError::DegreeMismatch { lagrange: lag.degree(), rt: rt.degree() });
    }
    Ok(())
}

/// The Lagrange DOFs on facet `f` in the order of the facet's 1D nodes
/// `t = i / deg`, from its lower to its higher vertex.
fn facet_lagrange_dofs(space: &FeSpace, f: usize) -> Vec<usize> {
    let mesh = space.mesh();
    let (e, j) = mesh.facet_incidence(f).first;
    let deg = space.degree();
    let nv = mesh.kind().num_vertices();
    let dofs = space.element_dofs(e);
    let lf = mesh.local_facet(e, j);
    // local ordering: vertex j, vertex j+1, then edge nodes of edge j
    let mut along = Vec::with_capacity(deg + 1);
    along.push(dofs[j]);
    for pos in 0..deg - 1 {
        along.push(dofs[nv + j * (deg - 1) + pos]);
    }
    along.push(dofs[(j + 1) % nv]);
    if lf.reversed {
        along.reverse();
    }
    along
}

/// `∫₀¹ ℓ_a(t) L_m(t) dt` and `∫₀¹ ℓ_a'(t) L_m(t) dt` for the 1D equispaced
/// Lagrange basis of degree `deg`; indexed `[a][m]`.
fn facet_moment_tables(deg: usize, k: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let nodes: Vec<f64> = (0..=deg).map(|i| i as f64 / deg as f64).collect();
    let (t, w) = gauss_legendre(deg + k + 2);
    let ell = |a: usize, x: f64| -> f64 {
        nodes.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &nb)| (x - nb) / (nodes[a] - nb)).product()
    };
    let dell = |a: usize, x: f64| -> f64 {
        let mut s = 0.0;
        for c in 0..=deg {
            if c == a {
                continue;
            }
            let mut p = 1.0 / (nodes[a] - nodes[c]);
            for b in 0..=deg {
                if b != a && b != c {
                    p *= (x - nodes[b]) / (nodes[a] - nodes[b]);
                }
            }
            s += p;
        }
        s
    };
    let mut val = vec![vec![0.0; k + 1]; deg + 1];
    let mut der = vec![vec![0.0; k + 1]; deg + 1];
    for a in 0..=deg {
        for m in 0..=k {
            for (ti, wi) in t.iter().zip(&w) {
                let l = shifted_legendre(m, *ti);
                val[a][m] += wi * ell(a, *ti) * l;
                der[a][m] += wi * dell(a, *ti) * l;
            }
        }
    }
    (val, der)
}

/// Reference-element RT functionals of `z ↦ pullback(field)` for every basis
/// function of a Lagrange element; returns `rows[interior_dof][local_col]`.
fn interior_rows(
    kind: crate::mesh::ElementKind,
    k: usize,
    ncols: usize,
    field: &dyn Fn(usize, [f64; 2]) -> [f64; 2],
) -> Vec<Vec<f64>> {
    let nedge = kind.num_vertices() * (k + 1);
    let mut rows = Vec::new();
    for c in 0..ncols {
        let dofs = rt_reference_dofs(kind, k, &|xi| field(c, xi));
        for (i, v) in dofs[nedge..].iter().enumerate() {
            if rows.len() <= i {
                rows.push(vec![0.0; ncols]);
            }
            rows[i][c] = *v;
        }
    }
    rows
}

/// RT interpolation of the vector Lagrange space (degree `k+1`, components
/// interleaved: column `2·node + component`).
pub fn assemble_pi(lag: &FeSpace, rt: &FeSpace) -> Result<CsrMatrix, FemError> {
    check_pair(lag, rt)?;
    let mesh = rt.mesh();
    let k = rt.degree();
    let deg = lag.degree();
    let (val, _) = facet_moment_tables(deg, k);
    let mut tb = TripletBuilder::new(rt.ndofs(), 2 * lag.ndofs());
    for f in 0..mesh.num_facets() {
        let n = mesh.facet_normal(f);
        let len = mesh.facet_length(f);
        let dofs = facet_lagrange_dofs(lag, f);
        for m in 0..=k {
            for (a, &d) in dofs.iter().enumerate() {
                let v = val[a][m];
                if v != 0.0 {
                    for c in 0..2 {
                        if n[c] != 0.0 {
                            tb.push(f * (k + 1) + m, 2 * d + c, n[c] * len * v);
                        }
                    }
                }
            }
        }
    }
    // interior moments of the pulled-back field det J · J⁻¹ (φ_a e_c)
    let refel = LagrangeRef::new(mesh.kind(), deg);
    let nloc = refel.ndofs();
    let nedge = mesh.kind().num_vertices() * (k + 1);
    let rule = QuadratureRule::new(mesh.kind(), k + 3);
    let tab = refel.tabulate(&rule.points);
    let moments = rt_interior_moments(mesh.kind(), k);
    let mono_w: Vec<Vec<f64>> = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| moments.iter().map(|&(_, a, b)| w * legendre2(a, b, *x)).collect())
        .collect();
    let mut rows = vec![0.0; moments.len() * 2 * nloc];
    for e in 0..mesh.num_elements() {
        let map = element_map(mesh, e);
        rows.iter_mut().for_each(|v| *v = 0.0);
        for (q, &xi) in rule.points.iter().enumerate() {
            let j = map.jacobian(xi);
            let pull = [[j[1][1], -j[0][1]], [-j[1][0], j[0][0]]];
            let phi = tab.values_at(q);
            for (i, &(cm, _, _)) in moments.iter().enumerate() {
                let mw = mono_w[q][i];
                for a in 0..nloc {
                    for c in 0..2 {
                        rows[i * 2 * nloc + 2 * a + c] += mw * pull[cm][c] * phi[a];
                    }
                }
            }
        }
        let rdofs = rt.element_dofs(e);
        let ldofs = lag.element_dofs(e);
        for i in 0..moments.len() {
            for col in 0..2 * nloc {
                let v = rows[i * 2 * nloc + col];
                if v != 0.0 {
                    tb.push(rdofs[nedge + i], 2 * ldofs[col / 2] + col % 2, v);
                }
            }
        }
    }
    Ok(tb.build())
}

/// RT representation of `curl φ = (∂φ/∂y, −∂φ/∂x)` for scalar Lagrange `φ`.
pub fn assemble_curl(lag: &FeSpace, rt: &FeSpace) -> Result<CsrMatrix, FemError> {
    check_pair(lag, rt)?;
    let mesh = rt.mesh();
    let k = rt.degree();
    let deg = lag.degree();
    let (_, der) = facet_moment_tables(deg, k);
    let mut tb = TripletBuilder::new(rt.ndofs(), lag.ndofs());
    for f in 0..mesh.num_facets() {
        let (e, j) = mesh.facet_incidence(f).first;
        // n_γ = rot_cw(τ_γ) unless the first element traverses γ backwards
        let orient = if mesh.local_facet(e, j).reversed { -1.0 } else { 1.0 };
        let dofs = facet_lagrange_dofs(lag, f);
        for m in 0..=k {
            for (a, &d) in dofs.iter().enumerate() {
                let v = der[a][m];
                if v != 0.0 {
                    tb.push(f * (k + 1) + m, d, orient * v);
                }
            }
        }
    }
    let refel = LagrangeRef::new(mesh.kind(), deg);
    let nloc = refel.ndofs();
    let nedge = mesh.kind().num_vertices() * (k + 1);
    // the pulled-back curl is the reference curl, independent of geometry
    let field = |col: usize, xi: [f64; 2]| {
        let mut g = vec![[0.0; 2]; nloc];
        refel.eval_grad(xi, &mut g);
        [g[col][1], -g[col][0]]
    };
    let rows = interior_rows(mesh.kind(), k, nloc, &field);
    for e in 0..mesh.num_elements() {
        let rdofs = rt.element_dofs(e);
        let ldofs = lag.element_dofs(e);
        for (i, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    tb.push(rdofs[nedge + i], ldofs[c], v);
                }
            }
        }
    }
    Ok(tb.build())
}

/// Element-local RT DOFs (in the signed global orientation) of a physical
/// vector field, computed by quadrature on the element itself.
pub fn interpolate_rt_local(rt: &FeSpace, e: usize, field: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mesh = rt.mesh();
    let map = element_map(mesh, e);
    let local = rt_reference_dofs(mesh.kind(), rt.degree(), &|xi| piola_pullback(&map.jacobian(xi), field(map.map(xi))));
    local.iter().zip(rt.element_signs(e)).map(|(v, s)| v * s).collect()
}

/// Evaluates an RT finite element function on element `e` at reference point
/// `xi`: `(value, divergence)` in physical coordinates.
pub fn eval_rt(rt: &FeSpace, refel: &RtRef, coeffs: &[f64], e: usize, xi: [f64; 2]) -> ([f64; 2], f64) {
    let n = refel.ndofs();
    let mut vals = vec![[0.0; 2]; n];
    let mut divs = vec![0.0; n];
    refel.eval(xi, &mut vals, &mut divs);
    let j = element_map(rt.mesh(), e).jacobian(xi);
    let dj = det2(&j);
    let mut v = [0.0; 2];
    let mut d = 0.0;
    for ((&g, &s), (val, div)) in rt.element_dofs(e).iter().zip(rt.element_signs(e)).zip(vals.iter().zip(&divs)) {
        let c = coeffs[g] * s;
        let pv = piola(&j, *val);
        v[0] += c * pv[0];
        v[1] += c * pv[1];
        d += c * div / dj;
    }
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElementKind;
    use std::sync::Arc;

    #[test]
    fn h1_gram_is_exactly_symmetric() {
        for kind in [ElementKind::Triangle, ElementKind::Quadrilateral] {
            let m = Arc::new(Mesh::cartesian(3, 3, kind).unwrap());
            for p in 1..=3 {
                let s = FeSpace::new(m.clone(), Family::Lagrange, p).unwrap();
                let g = assemble_h1_gram(&s, None).unwrap();
                assert!(g.is_symmetric_exact());
                assert_eq!(g.nrows(), s.free_dofs().len());
            }
        }
    }

    #[test]
    fn hdiv_gram_symmetric_positive_diagonal() {
        let m = Arc::new(Mesh::cartesian(2, 3, ElementKind::Triangle).unwrap());
        for k in 0..=2 {
            let s = FeSpace::new(m.clone(), Family::RaviartThomas, k).unwrap();
            let d = assemble_hdiv_gram(&s).unwrap();
            assert!(d.is_symmetric_exact());
            assert!(d.diagonal().iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn family_mismatch() {
        let m = Arc::new(Mesh::cartesian(1, 1, ElementKind::Quadrilateral).unwrap());
        let s = FeSpace::new(m, Family::RaviartThomas, 0).unwrap();
        assert!(matches!(assemble_h1_gram(&s, None), Err(FemError::FamilyMismatch { .. })));
    }
}
