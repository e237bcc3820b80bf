use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::reference::{LagrangeRef, NodeClass, RtRef};
use super::FemError;
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lagrange,
    BrokenLagrange,
    RaviartThomas,
    FacetTrace,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Lagrange => "lagrange",
            Family::BrokenLagrange => "broken_lagrange",
            Family::RaviartThomas => "raviart_thomas",
            Family::FacetTrace => "facet_trace",
        };
        f.write_str(s)
    }
}

/// Interior DOFs are supported in a single element away from its boundary;
/// interface DOFs are supported on some facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DofLabel {
    Interior,
    Interface,
}

impl DofLabel {
    pub fn letter(self) -> char {
        match self {
            DofLabel::Interior => 'i',
            DofLabel::Interface => 'f',
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    family: Family,
    degree: usize,
    ndofs: usize,
    nloc: usize,
    elem_dofs: Vec<usize>,
    elem_signs: Vec<f64>,
    labels: Vec<DofLabel>,
    boundary: Vec<bool>,
}

impl FeSpace {
    /// Supported degrees: lagrange 1..=3, broken_lagrange 1..=4 (test spaces
    /// one above the trial order), raviart_thomas and facet_trace 0..=2.
    pub fn new(mesh: Arc<Mesh>, family: Family, degree: usize) -> Result<FeSpace, FemError> {
        let ok = match family {
            Family::Lagrange => (1..=3).contains(&degree),
            Family::BrokenLagrange => (1..=4).contains(&degree),
            Family::RaviartThomas | Family::FacetTrace => degree <= 2,
        };
        if !ok {
            return Err(FemError::UnsupportedDegree { family, degree });
        }
        Ok(Self::build(mesh, family, degree))
    }

    /// Same as [`FeSpace::new`] without the degree whitelist; used for
    /// enriched local spaces.
    pub(crate) fn build(mesh: Arc<Mesh>, family: Family, degree: usize) -> FeSpace {
        match family {
            Family::Lagrange => Self::lagrange(mesh, degree),
            Family::BrokenLagrange => Self::broken(mesh, degree),
            Family::RaviartThomas => Self::rt(mesh, degree, false),
            Family::FacetTrace => Self::rt(mesh, degree, true),
        }
    }

    fn lagrange(mesh: Arc<Mesh>, k: usize) -> FeSpace {
        let refel = LagrangeRef::new(mesh.kind(), k);
        let nloc = refel.ndofs();
        let nv = mesh.num_vertices();
        let mut vmap = vec![usize::MAX; nv];
        let mut nvert = 0;
        for e in 0..mesh.num_elements() {
            for &v in mesh.element_vertices(e) {
                if vmap[v] == usize::MAX {
                    vmap[v] = nvert;
                    nvert += 1;
                }
            }
        }
        // vertex numbering follows global vertex order for used vertices
        let mut counter = 0;
        for m in vmap.iter_mut() {
            if *m != usize::MAX {
                *m = counter;
                counter += 1;
            }
        }
        let per_edge = k - 1;
        let edge_off = nvert;
        let int_off = edge_off + mesh.num_facets() * per_edge;
        let nint = refel.num_interior();
        let ndofs = int_off + mesh.num_elements() * nint;

        let mut elem_dofs = Vec::with_capacity(mesh.num_elements() * nloc);
        for e in 0..mesh.num_elements() {
            let verts = mesh.element_vertices(e);
            for c in refel.classes() {
                let d = match *c {
                    NodeClass::Vertex(j) => vmap[verts[j]],
                    NodeClass::Edge { edge, pos } => {
                        let lf = mesh.local_facet(e, edge);
                        let p = if lf.reversed { per_edge - 1 - pos } else { pos };
                        edge_off + lf.facet * per_edge + p
                    }
                    NodeClass::Interior(i) => int_off + e * nint + i,
                };
                elem_dofs.push(d);
            }
        }
        let mut labels = vec![DofLabel::Interface; ndofs];
        for l in labels.iter_mut().skip(int_off) {
            *l = DofLabel::Interior;
        }
        let mut boundary = vec![false; ndofs];
        for &f in mesh.boundary_facets() {
            let [a, b] = mesh.facets()[f];
            boundary[vmap[a]] = true;
            boundary[vmap[b]] = true;
            for p in 0..per_edge {
                boundary[edge_off + f * per_edge + p] = true;
            }
        }
        FeSpace {
            elem_signs: vec![1.0; elem_dofs.len()],
            mesh,
            family: Family::Lagrange,
            degree: k,
            ndofs,
            nloc,
            elem_dofs,
            labels,
            boundary,
        }
    }

    fn broken(mesh: Arc<Mesh>, k: usize) -> FeSpace {
        let refel = LagrangeRef::new(mesh.kind(), k);
        let nloc = refel.ndofs();
        let ndofs = nloc * mesh.num_elements();
        let labels = refel
            .classes()
            .iter()
            .map(|c| if matches!(c, NodeClass::Interior(_)) { DofLabel::Interior } else { DofLabel::Interface })
            .cycle()
            .take(ndofs)
            .collect();
        FeSpace {
            elem_dofs: (0..ndofs).collect(),
            elem_signs: vec![1.0; ndofs],
            boundary: vec![false; ndofs],
            mesh,
            family: Family::BrokenLagrange,
            degree: k,
            ndofs,
            nloc,
            labels,
        }
    }

    fn rt(mesh: Arc<Mesh>, k: usize, trace_only: bool) -> FeSpace {
        let kind = mesh.kind();
        let nv = kind.num_vertices();
        let per_edge = k + 1;
        let nint = if trace_only { 0 } else { RtRef::new(kind, k).num_interior() };
        let nloc = nv * per_edge + nint;
        let edge_total = mesh.num_facets() * per_edge;
        let ndofs = edge_total + mesh.num_elements() * nint;
        let mut elem_dofs = Vec::with_capacity(nloc * mesh.num_elements());
        let mut elem_signs = Vec::with_capacity(nloc * mesh.num_elements());
        for e in 0..mesh.num_elements() {
            for j in 0..nv {
                let lf = mesh.local_facet(e, j);
                for m in 0..per_edge {
                    elem_dofs.push(lf.facet * per_edge + m);
                    let flip = if lf.reversed && m % 2 == 1 { -1.0 } else { 1.0 };
                    elem_signs.push(lf.sign * flip);
                }
            }
            for i in 0..nint {
                elem_dofs.push(edge_total + e * nint + i);
                elem_signs.push(1.0);
            }
        }
        let mut labels = vec![DofLabel::Interface; ndofs];
        for l in labels.iter_mut().skip(edge_total) {
            *l = DofLabel::Interior;
        }
        let mut boundary = vec![false; ndofs];
        for &f in mesh.boundary_facets() {
            for m in 0..per_edge {
                boundary[f * per_edge + m] = true;
            }
        }
        FeSpace {
            mesh,
            family: if trace_only { Family::FacetTrace } else { Family::RaviartThomas },
            degree: k,
            ndofs,
            nloc,
            elem_dofs,
            elem_signs,
            labels,
            boundary,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    /// Local DOFs per element.
    pub fn nloc(&self) -> usize {
        self.nloc
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.elem_dofs[e * self.nloc..(e + 1) * self.nloc]
    }

    /// Orientation signs; `±1` on RT and trace facet DOFs, `+1` elsewhere.
    pub fn element_signs(&self, e: usize) -> &[f64] {
        &self.elem_signs[e * self.nloc..(e + 1) * self.nloc]
    }

    pub fn labels(&self) -> &[DofLabel] {
        &self.labels
    }

    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.ndofs).filter(|&d| self.labels[d] == DofLabel::Interior).collect()
    }

    pub fn interface_dofs(&self) -> Vec<usize> {
        (0..self.ndofs).filter(|&d| self.labels[d] == DofLabel::Interface).collect()
    }

    /// DOFs supported on a boundary facet.
    pub fn is_boundary_dof(&self, d: usize) -> bool {
        self.boundary[d]
    }

    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.ndofs).filter(|&d| self.boundary[d]).collect()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.ndofs).filter(|&d| !self.boundary[d]).collect()
    }

    /// `map[d]` is the index among free DOFs, or `None` for boundary DOFs.
    pub fn free_index_map(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElementKind;

    fn tri() -> Arc<Mesh> {
        Arc::new(Mesh::parse("mesh2d tri\nvertices 3\n0 0\n1 0\n0 1\nelements 1\n0 1 2 1\n").unwrap())
    }

    #[test]
    fn single_triangle_rt_counts() {
        let rt0 = FeSpace::new(tri(), Family::RaviartThomas, 0).unwrap();
        assert_eq!(rt0.ndofs(), 3);
        assert!(rt0.interior_dofs().is_empty());
        let rt1 = FeSpace::new(tri(), Family::RaviartThomas, 1).unwrap();
        assert_eq!(rt1.ndofs(), 8);
        assert_eq!(rt1.interface_dofs().len(), 6);
        assert_eq!(rt1.interior_dofs().len(), 2);
    }

    #[test]
    fn quad_lagrange_counts() {
        let m = Arc::new(Mesh::cartesian(2, 2, ElementKind::Quadrilateral).unwrap());
        assert_eq!(FeSpace::new(m.clone(), Family::Lagrange, 1).unwrap().ndofs(), 9);
        assert_eq!(FeSpace::new(m.clone(), Family::Lagrange, 2).unwrap().ndofs(), 25);
        let l3 = FeSpace::new(m, Family::Lagrange, 3).unwrap();
        assert_eq!(l3.ndofs(), 49);
        assert_eq!(l3.free_dofs().len(), 25);
    }

    #[test]
    fn unsupported_degrees() {
        assert!(FeSpace::new(tri(), Family::Lagrange, 0).is_err());
        assert!(FeSpace::new(tri(), Family::Lagrange, 4).is_err());
        assert!(FeSpace::new(tri(), Family::RaviartThomas, 3).is_err());
    }

    #[test]
    fn trace_matches_rt_facet_counts() {
        let m = Arc::new(Mesh::cartesian(3, 2, ElementKind::Triangle).unwrap());
        for k in 0..=2 {
            let rt = FeSpace::new(m.clone(), Family::RaviartThomas, k).unwrap();
            let tr = FeSpace::new(m.clone(), Family::FacetTrace, k).unwrap();
            assert_eq!(tr.ndofs(), m.num_facets() * (k + 1));
            assert_eq!(rt.interface_dofs(), (0..tr.ndofs()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn interior_rt_dofs_belong_to_one_element() {
        let m = Arc::new(Mesh::cartesian(2, 2, ElementKind::Quadrilateral).unwrap());
        let rt = FeSpace::new(m.clone(), Family::RaviartThomas, 2).unwrap();
        let mut count = vec![0; rt.ndofs()];
        for e in 0..m.num_elements() {
            for &d in rt.element_dofs(e) {
                count[d] += 1;
            }
        }
        for d in rt.interior_dofs() {
            assert_eq!(count[d], 1);
        }
        for f in 0..m.num_facets() {
            let expect = m.facet_incidence(f).count();
            for mm in 0..3 {
                assert_eq!(count[f * 3 + mm], expect);
            }
        }
    }
}
