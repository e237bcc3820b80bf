//! Conforming 2D meshes of triangles or quadrilaterals with facet topology.
//!
//! Facets are stored as vertex pairs in ascending global index order; that
//! ordering fixes the facet parametrization (from the lower vertex to the
//! higher one). The facet normal points out of the lowest-numbered incident
//! element, hence outward on the boundary.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell counts must be positive (got {nx} x {ny})")]
    ZeroCount { nx: usize, ny: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inverted element {element}")]
    InvertedElement { element: usize },
    #[error("non-conforming connectivity: edge ({a}, {b}) shared by more than two elements")]
    NonConforming { a: usize, b: usize },
    #[error("element {element} references vertex {vertex} of {count}")]
    BadVertex { element: usize, vertex: usize, count: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    #[serde(rename = "tri")]
    Triangle,
    #[serde(rename = "quad")]
    Quadrilateral,
}

impl ElementKind {
    pub fn num_vertices(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Quadrilateral => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Triangle => "tri",
            ElementKind::Quadrilateral => "quad",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ElementKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tri" | "triangle" => Ok(ElementKind::Triangle),
            "quad" | "quadrilateral" => Ok(ElementKind::Quadrilateral),
            other => Err(format!("unknown element kind '{other}'")),
        }
    }
}

/// One or two (element, local edge) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetIncidence {
    pub first: (usize, usize),
    pub second: Option<(usize, usize)>,
}

impl FacetIncidence {
    pub fn count(&self) -> usize {
        1 + self.second.is_some() as usize
    }
}

/// How local edge `j` of an element sees its global facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFacet {
    pub facet: usize,
    /// `+1` when the element's outward normal equals the facet normal.
    pub sign: f64,
    /// True when the local edge runs from the higher vertex to the lower one.
    pub reversed: bool,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    kind: ElementKind,
    vertices: Vec<[f64; 2]>,
    elem_vertices: Vec<usize>,
    attribute: Vec<i32>,
    facets: Vec<[usize; 2]>,
    facet_to_elems: Vec<FacetIncidence>,
    boundary_facets: Vec<usize>,
    elem_facets: Vec<LocalFacet>,
    normals: Vec<[f64; 2]>,
}

impl Mesh {
    /// Builds the facet topology for the given cells and checks orientation.
    pub fn from_cells(
        kind: ElementKind,
        vertices: Vec<[f64; 2]>,
        elements: Vec<Vec<usize>>,
        attribute: Vec<i32>,
    ) -> Result<Mesh, MeshError> {
        let nv = kind.num_vertices();
        assert_eq!(elements.len(), attribute.len());
        let mut elem_vertices = Vec::with_capacity(elements.len() * nv);
        for (e, cell) in elements.iter().enumerate() {
            if cell.len() != nv {
                return Err(MeshError::Parse { line: 0, msg: format!("element {e} has {} vertices", cell.len()) });
            }
            for &v in cell {
                if v >= vertices.len() {
                    return Err(MeshError::BadVertex { element: e, vertex: v, count: vertices.len() });
                }
            }
            for a in 0..nv {
                for b in (a + 1)..nv {
                    if cell[a] == cell[b] {
                        return Err(MeshError::InvertedElement { element: e });
                    }
                }
            }
            elem_vertices.extend_from_slice(cell);
        }

        let mut mesh = Mesh {
            kind,
            vertices,
            elem_vertices,
            attribute,
            facets: Vec::new(),
            facet_to_elems: Vec::new(),
            boundary_facets: Vec::new(),
            elem_facets: Vec::new(),
            normals: Vec::new(),
        };
        for e in 0..mesh.num_elements() {
            if !mesh.jacobian_positive(e) {
                return Err(MeshError::InvertedElement { element: e });
            }
        }
        mesh.build_topology()?;
        Ok(mesh)
    }

    fn build_topology(&mut self) -> Result<(), MeshError> {
        let nv = self.kind.num_vertices();
        let ne = self.num_elements();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(ne * nv);
        self.elem_facets = Vec::with_capacity(ne * nv);
        for e in 0..ne {
            for j in 0..nv {
                let a = self.elem_vertices[e * nv + j];
                let b = self.elem_vertices[e * nv + (j + 1) % nv];
                let key = (a.min(b), a.max(b));
                let reversed = a > b;
                let local = match lookup.get(&key) {
                    None => {
                        let f = self.facets.len();
                        lookup.insert(key, f);
                        self.facets.push([key.0, key.1]);
                        self.facet_to_elems.push(FacetIncidence { first: (e, j), second: None });
                        let (pa, pb) = (self.vertices[a], self.vertices[b]);
                        let t = [pb[0] - pa[0], pb[1] - pa[1]];
                        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
                        self.normals.push([t[1] / len, -t[0] / len]);
                        LocalFacet { facet: f, sign: 1.0, reversed }
                    }
                    Some(&f) => {
                        let inc = &mut self.facet_to_elems[f];
                        if inc.second.is_some() {
                            return Err(MeshError::NonConforming { a: key.0, b: key.1 });
                        }
                        inc.second = Some((e, j));
                        LocalFacet { facet: f, sign: -1.0, reversed }
                    }
                };
                self.elem_facets.push(local);
            }
        }
        self.boundary_facets =
            (0..self.facets.len()).filter(|&f| self.facet_to_elems[f].second.is_none()).collect();
        Ok(())
    }

    /// Uniform grid of the unit square. Triangles split each cell along the
    /// lower-left to upper-right diagonal.
    pub fn cartesian(nx: usize, ny: usize, kind: ElementKind) -> Result<Mesh, MeshError> {
        if nx == 0 || ny == 0 {
            return Err(MeshError::ZeroCount { nx, ny });
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                match kind {
                    ElementKind::Quadrilateral => elements.push(vec![v00, v10, v11, v01]),
                    ElementKind::Triangle => {
                        elements.push(vec![v00, v10, v11]);
                        elements.push(vec![v00, v11, v01]);
                    }
                }
            }
        }
        let n = elements.len();
        Mesh::from_cells(kind, vertices, elements, vec![1; n])
    }

    /// Splits every element into four through edge midpoints (and the cell
    /// center for quadrilaterals). Children inherit the parent attribute.
    pub fn refine_uniform(&self) -> Mesh {
        let nv0 = self.num_vertices();
        let nf = self.num_facets();
        let mut vertices = self.vertices.clone();
        for f in &self.facets {
            let (a, b) = (self.vertices[f[0]], self.vertices[f[1]]);
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut elements = Vec::with_capacity(4 * self.num_elements());
        let mut attribute = Vec::with_capacity(4 * self.num_elements());
        for e in 0..self.num_elements() {
            let v = self.element_vertices(e);
            let mid = |j: usize| nv0 + self.local_facet(e, j).facet;
            match self.kind {
                ElementKind::Triangle => {
                    let (m0, m1, m2) = (mid(0), mid(1), mid(2));
                    elements.push(vec![v[0], m0, m2]);
                    elements.push(vec![m0, v[1], m1]);
                    elements.push(vec![m2, m1, v[2]]);
                    elements.push(vec![m0, m1, m2]);
                }
                ElementKind::Quadrilateral => {
                    let c = vertices.len();
                    let pts: Vec<[f64; 2]> = v.iter().map(|&i| self.vertices[i]).collect();
                    vertices.push([
                        0.25 * (pts[0][0] + pts[1][0] + pts[2][0] + pts[3][0]),
                        0.25 * (pts[0][1] + pts[1][1] + pts[2][1] + pts[3][1]),
                    ]);
                    let (m0, m1, m2, m3) = (mid(0), mid(1), mid(2), mid(3));
                    elements.push(vec![v[0], m0, c, m3]);
                    elements.push(vec![m0, v[1], m1, c]);
                    elements.push(vec![c, m1, v[2], m2]);
                    elements.push(vec![m3, c, m2, v[3]]);
                }
            }
            attribute.extend([self.attribute[e]; 4]);
        }
        debug_assert!(vertices.len() >= nv0 + nf);
        Mesh::from_cells(self.kind, vertices, elements, attribute)
            .expect("refinement of a valid mesh is valid")
    }

    pub fn refined(&self, times: usize) -> Mesh {
        let mut m = self.clone();
        for _ in 0..times {
            m = m.refine_uniform();
        }
        m
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.attribute.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn element_vertices(&self, e: usize) -> &[usize] {
        let nv = self.kind.num_vertices();
        &self.elem_vertices[e * nv..(e + 1) * nv]
    }

    pub fn element_coords(&self, e: usize) -> Vec<[f64; 2]> {
        self.element_vertices(e).iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn attribute(&self, e: usize) -> i32 {
        self.attribute[e]
    }

    pub fn attributes(&self) -> &[i32] {
        &self.attribute
    }

    pub fn facets(&self) -> &[[usize; 2]] {
        &self.facets
    }

    pub fn facet_incidence(&self, f: usize) -> FacetIncidence {
        self.facet_to_elems[f]
    }

    pub fn boundary_facets(&self) -> &[usize] {
        &self.boundary_facets
    }

    pub fn is_boundary_facet(&self, f: usize) -> bool {
        self.facet_to_elems[f].second.is_none()
    }

    pub fn facet_normal(&self, f: usize) -> [f64; 2] {
        self.normals[f]
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let (a, b) = (self.vertices[self.facets[f][0]], self.vertices[self.facets[f][1]]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn local_facet(&self, e: usize, j: usize) -> LocalFacet {
        self.elem_facets[e * self.kind.num_vertices() + j]
    }

    pub fn local_facets(&self, e: usize) -> &[LocalFacet] {
        let nv = self.kind.num_vertices();
        &self.elem_facets[e * nv..(e + 1) * nv]
    }

    /// `V − E + F`; equals 1 for a simply connected mesh without unused vertices.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_facets() as i64 + self.num_elements() as i64
    }

    pub fn unused_vertices(&self) -> Vec<usize> {
        let mut used = vec![false; self.num_vertices()];
        for &v in &self.elem_vertices {
            used[v] = true;
        }
        (0..used.len()).filter(|&v| !used[v]).collect()
    }

    /// Largest element diameter.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for e in 0..self.num_elements() {
            let c = self.element_coords(e);
            for a in 0..c.len() {
                for b in (a + 1)..c.len() {
                    h = h.max(((c[a][0] - c[b][0]).powi(2) + (c[a][1] - c[b][1]).powi(2)).sqrt());
                }
            }
        }
        h
    }

    /// Jacobian determinant of the element map is positive everywhere. The
    /// bilinear determinant is affine in each reference coordinate, so the
    /// corners suffice.
    fn jacobian_positive(&self, e: usize) -> bool {
        let c = self.element_coords(e);
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
            (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        };
        let n = c.len();
        (0..n).all(|i| cross(c[i], c[(i + 1) % n], c[(i + n - 1) % n]) > 0.0)
    }

    /// Parses the text mesh format:
    ///
    /// ```text
    /// mesh2d <tri|quad>
    /// vertices <V>
    /// x y          (V lines)
    /// elements <F>
    /// i j k [l] attr   (F lines, 0-based)
    /// ```
    pub fn parse(text: &str) -> Result<Mesh, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };

        let (ln, header) = lines.next().ok_or_else(|| err(1, "empty mesh file"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some("mesh2d") {
            return Err(err(ln, "expected 'mesh2d <tri|quad>'"));
        }
        let kind: ElementKind = h
            .next()
            .ok_or_else(|| err(ln, "missing element kind"))?
            .parse()
            .map_err(|e: String| err(ln, &e))?;

        let count = |expected: &str, item: Option<(usize, &str)>| -> Result<usize, MeshError> {
            let (ln, l) = item.ok_or_else(|| err(0, &format!("missing '{expected}' section")))?;
            let mut t = l.split_whitespace();
            if t.next() != Some(expected) {
                return Err(err(ln, &format!("expected '{expected} <count>'")));
            }
            t.next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(ln, "bad count"))
        };

        let nv = count("vertices", lines.next())?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated vertex list"))?;
            let xy: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(ln, &e.to_string()))?;
            if xy.len() != 2 {
                return Err(err(ln, "expected 'x y'"));
            }
            vertices.push([xy[0], xy[1]]);
        }

        let ne = count("elements", lines.next())?;
        let per = kind.num_vertices();
        let mut elements = Vec::with_capacity(ne);
        let mut attribute = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated element list"))?;
            let ids: Vec<i64> = l
                .split_whitespace()
                .map(|s| s.parse::<i64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(ln, &e.to_string()))?;
            if ids.len() != per + 1 {
                return Err(err(ln, &format!("expected {per} vertex indices and an attribute")));
            }
            if ids[..per].iter().any(|&i| i < 0) {
                return Err(err(ln, "negative vertex index"));
            }
            elements.push(ids[..per].iter().map(|&i| i as usize).collect());
            attribute.push(ids[per] as i32);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "trailing content after element list"));
        }

        let mesh = Mesh::from_cells(kind, vertices, elements, attribute)?;
        let unused = mesh.unused_vertices();
        if !unused.is_empty() {
            log::warn!("mesh has {} unused vertices (first: {})", unused.len(), unused[0]);
        }
        Ok(mesh)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("mesh2d {}\nvertices {}\n", self.kind, self.num_vertices());
        for v in &self.vertices {
            s.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
        }
        s.push_str(&format!("elements {}\n", self.num_elements()));
        for e in 0..self.num_elements() {
            for v in self.element_vertices(e) {
                s.push_str(&format!("{v} "));
            }
            s.push_str(&format!("{}\n", self.attribute[e]));
        }
        s
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    Mesh::parse(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(m: &Mesh) {
        assert_eq!(m.euler_characteristic(), 1);
        for f in 0..m.num_facets() {
            let [a, b] = m.facets()[f];
            assert!(a < b);
            let inc = m.facet_incidence(f);
            assert_eq!(inc.count() == 1, m.is_boundary_facet(f));
            // normal points out of the first (lower-numbered) element
            let (e, j) = inc.first;
            if let Some((e2, _)) = inc.second {
                assert!(e < e2);
            }
            let c = m.element_coords(e);
            let nv = c.len();
            let (p, q) = (c[j], c[(j + 1) % nv]);
            let centroid = c.iter().fold([0.0, 0.0], |s, x| [s[0] + x[0] / nv as f64, s[1] + x[1] / nv as f64]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let n = m.facet_normal(f);
            assert!(n[0] * (mid[0] - centroid[0]) + n[1] * (mid[1] - centroid[1]) > 0.0);
        }
        for e in 0..m.num_elements() {
            assert!(m.jacobian_positive(e));
        }
    }

    #[test]
    fn single_quad() {
        let m = Mesh::cartesian(1, 1, ElementKind::Quadrilateral).unwrap();
        assert_eq!((m.num_vertices(), m.num_elements(), m.num_facets()), (4, 1, 4));
        assert_eq!(m.boundary_facets().len(), 4);
        check_invariants(&m);
    }

    #[test]
    fn two_by_two_triangles() {
        let m = Mesh::cartesian(2, 2, ElementKind::Triangle).unwrap();
        assert_eq!((m.num_vertices(), m.num_facets(), m.num_elements()), (9, 16, 8));
        check_invariants(&m);
    }

    #[test]
    fn two_by_one_quads() {
        let m = Mesh::cartesian(2, 1, ElementKind::Quadrilateral).unwrap();
        assert_eq!((m.num_elements(), m.num_vertices(), m.num_facets()), (2, 6, 7));
        assert_eq!(m.num_facets() - m.boundary_facets().len(), 1);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(matches!(Mesh::cartesian(0, 3, ElementKind::Triangle), Err(MeshError::ZeroCount { .. })));
    }

    #[test]
    fn refine_single_quad() {
        let m = Mesh::cartesian(1, 1, ElementKind::Quadrilateral).unwrap().refine_uniform();
        assert_eq!((m.num_elements(), m.num_vertices(), m.num_facets()), (4, 9, 12));
        check_invariants(&m);
    }

    fn facet_multiset(m: &Mesh) -> Vec<[i64; 4]> {
        let key = |p: [f64; 2]| [(p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64];
        let mut v: Vec<[i64; 4]> = m
            .facets()
            .iter()
            .map(|f| {
                let (a, b) = (key(m.vertex(f[0])), key(m.vertex(f[1])));
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                [a[0], a[1], b[0], b[1]]
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn refinement_matches_finer_cartesian() {
        for kind in [ElementKind::Triangle, ElementKind::Quadrilateral] {
            for n in 1..4 {
                let r = Mesh::cartesian(n, n, kind).unwrap().refine_uniform();
                let c = Mesh::cartesian(2 * n, 2 * n, kind).unwrap();
                assert_eq!(r.num_vertices(), c.num_vertices());
                assert_eq!(r.num_facets(), c.num_facets());
                assert_eq!(r.num_elements(), c.num_elements());
                assert_eq!(facet_multiset(&r), facet_multiset(&c));
                check_invariants(&r);
            }
        }
    }

    #[test]
    fn refinement_keeps_boundary_and_attributes() {
        let text = "mesh2d tri\nvertices 4\n0 0\n1 0\n1 1\n0 1\nelements 2\n0 1 2 3\n0 2 3 7\n";
        let m = Mesh::parse(text).unwrap();
        let r = m.refine_uniform();
        assert_eq!(r.num_elements(), 4 * m.num_elements());
        assert_eq!(r.boundary_facets().len(), 2 * m.boundary_facets().len());
        assert_eq!(&r.attributes()[..4], &[3; 4]);
        assert_eq!(&r.attributes()[4..], &[7; 4]);
        // boundary children lie on the parent boundary (unit square edges here)
        for &f in r.boundary_facets() {
            let [a, b] = r.facets()[f];
            let (p, q) = (r.vertex(a), r.vertex(b));
            let on = |i: usize, v: f64| p[i] == v && q[i] == v;
            assert!(on(0, 0.0) || on(0, 1.0) || on(1, 0.0) || on(1, 1.0));
        }
    }

    #[test]
    fn parse_single_triangle() {
        let m = Mesh::parse("mesh2d tri\nvertices 3\n0 0\n1 0\n0 1\nelements 1\n0 1 2 1\n").unwrap();
        assert_eq!((m.num_vertices(), m.num_elements(), m.num_facets()), (3, 1, 3));
    }

    #[test]
    fn dangling_vertex_is_accepted() {
        let m = Mesh::parse("mesh2d tri\nvertices 4\n0 0\n1 0\n0 1\n5 5\nelements 1\n0 1 2 1\n").unwrap();
        assert_eq!(m.unused_vertices(), vec![3]);
    }

    #[test]
    fn repeated_vertex_is_inverted() {
        let r = Mesh::parse("mesh2d tri\nvertices 3\n0 0\n1 0\n0 1\nelements 1\n0 1 1 1\n");
        assert!(matches!(r, Err(MeshError::InvertedElement { element: 0 })));
    }

    #[test]
    fn clockwise_element_is_inverted() {
        let r = Mesh::parse("mesh2d tri\nvertices 3\n0 0\n1 0\n0 1\nelements 1\n0 2 1 1\n");
        assert!(matches!(r, Err(MeshError::InvertedElement { .. })));
    }

    #[test]
    fn edge_in_three_elements_is_nonconforming() {
        let text = "mesh2d tri\nvertices 5\n0 0\n1 0\n0 1\n0 -1\n1 1\nelements 3\n0 1 2 1\n1 0 3 1\n0 1 4 1\n";
        assert!(matches!(Mesh::parse(text), Err(MeshError::NonConforming { .. })));
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::cartesian(3, 2, ElementKind::Quadrilateral).unwrap();
        let back = Mesh::parse(&m.to_text()).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.facets(), m.facets());
    }
}
