//! Mesh representation, structured generation, boundary selection and the
//! local→global DoF map.

mod dofmap;
pub mod gmsh;
mod grid;
pub mod reference;

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::{FemError, Result};

pub use dofmap::DofMap;
pub use grid::{generate_disk, generate_grid, structured_tag_names};
pub use reference::{reference_tables, QuadratureRule, ReferenceElement, ReferenceTables};

/// Supported linear element kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Tri3,
    Quad4,
    Tet4,
}

impl ElementKind {
    pub fn dim(self) -> usize {
        match self {
            ElementKind::Tri3 | ElementKind::Quad4 => 2,
            ElementKind::Tet4 => 3,
        }
    }

    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementKind::Tri3 => 3,
            ElementKind::Quad4 => 4,
            ElementKind::Tet4 => 4,
        }
    }

    /// Measure of the reference cell.
    pub fn reference_measure(self) -> f64 {
        match self {
            ElementKind::Tri3 => 0.5,
            ElementKind::Quad4 => 1.0,
            ElementKind::Tet4 => 1.0 / 6.0,
        }
    }

    /// True when the reference→physical map is affine for every element.
    pub fn is_affine(self) -> bool {
        !matches!(self, ElementKind::Quad4)
    }

    /// Default quadrature degree for constant-coefficient stiffness.
    pub fn default_stiffness_degree(self) -> usize {
        match self {
            ElementKind::Tri3 | ElementKind::Tet4 => 1,
            ElementKind::Quad4 => 3,
        }
    }

    /// Default quadrature degree for mass matrices and variable coefficients.
    pub fn default_mass_degree(self) -> usize {
        match self {
            ElementKind::Tri3 | ElementKind::Tet4 => 2,
            ElementKind::Quad4 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Tri3 => "tri3",
            ElementKind::Quad4 => "quad4",
            ElementKind::Tet4 => "tet4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tri3" | "tri" | "triangle" => Some(ElementKind::Tri3),
            "quad4" | "quad" | "quadrilateral" => Some(ElementKind::Quad4),
            "tet4" | "tet" | "tetrahedron" => Some(ElementKind::Tet4),
            _ => None,
        }
    }
}

/// An unstructured mesh made of a single element kind.
///
/// Coordinates and connectivity are stored flat: node `i` occupies
/// `nodes[i * dim..(i + 1) * dim]`, element `e` occupies
/// `elements[e * k..(e + 1) * k]` with `k = kind.nodes_per_element()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    kind: ElementKind,
    nodes: Vec<f64>,
    elements: Vec<usize>,
    boundary: BTreeMap<String, BTreeSet<usize>>,
}

impl Mesh {
    /// Builds and validates a mesh.
    pub fn new(kind: ElementKind, nodes: Vec<f64>, elements: Vec<usize>) -> Result<Self> {
        Self::with_boundary(kind, nodes, elements, BTreeMap::new())
    }

    pub fn with_boundary(
        kind: ElementKind,
        nodes: Vec<f64>,
        elements: Vec<usize>,
        boundary: BTreeMap<String, BTreeSet<usize>>,
    ) -> Result<Self> {
        let mesh = Mesh {
            kind,
            nodes,
            elements,
            boundary,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let d = self.kind.dim();
        let k = self.kind.nodes_per_element();
        if self.nodes.len() % d != 0 {
            return Err(FemError::InvalidMesh(format!(
                "coordinate array length {} is not a multiple of dimension {d}",
                self.nodes.len()
            )));
        }
        if self.elements.len() % k != 0 {
            return Err(FemError::InvalidMesh(format!(
                "connectivity length {} is not a multiple of {k}",
                self.elements.len()
            )));
        }
        if let Some(bad) = self.nodes.iter().position(|x| !x.is_finite()) {
            return Err(FemError::InvalidMesh(format!(
                "non-finite coordinate at node {}",
                bad / d
            )));
        }
        let n = self.n_nodes();
        for (e, conn) in self.elements.chunks_exact(k).enumerate() {
            for (a, &i) in conn.iter().enumerate() {
                if i >= n {
                    return Err(FemError::InvalidMesh(format!(
                        "element {e} references node {i} but the mesh has {n} nodes"
                    )));
                }
                if conn[..a].contains(&i) {
                    return Err(FemError::InvalidMesh(format!(
                        "element {e} lists node {i} more than once"
                    )));
                }
            }
            let det = self.centroid_jacobian_det(e);
            if !(det > 0.0) {
                return Err(FemError::Orientation { element: e, det });
            }
        }
        for (tag, set) in &self.boundary {
            if let Some(&i) = set.iter().next_back() {
                if i >= n {
                    return Err(FemError::InvalidMesh(format!(
                        "boundary tag '{tag}' references node {i} outside the mesh"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Jacobian determinant of the reference map at the reference centroid.
    fn centroid_jacobian_det(&self, e: usize) -> f64 {
        let conn = self.element(e);
        let x = |a: usize, c: usize| self.nodes[conn[a] * self.kind.dim() + c];
        match self.kind {
            ElementKind::Tri3 => {
                let (ax, ay) = (x(1, 0) - x(0, 0), x(1, 1) - x(0, 1));
                let (bx, by) = (x(2, 0) - x(0, 0), x(2, 1) - x(0, 1));
                ax * by - ay * bx
            }
            ElementKind::Quad4 => {
                // bilinear map at (1/2, 1/2)
                let dx = |c: usize| 0.5 * (x(1, c) + x(2, c) - x(0, c) - x(3, c));
                let dy = |c: usize| 0.5 * (x(2, c) + x(3, c) - x(0, c) - x(1, c));
                dx(0) * dy(1) - dx(1) * dy(0)
            }
            ElementKind::Tet4 => {
                let v = |a: usize| [x(a, 0) - x(0, 0), x(a, 1) - x(0, 1), x(a, 2) - x(0, 2)];
                let (a, b, c) = (v(1), v(2), v(3));
                a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0])
            }
        }
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / self.kind.dim()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / self.kind.nodes_per_element()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.kind.nodes_per_element();
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn boundary_tags(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.boundary
    }

    pub fn boundary_tag(&self, tag: &str) -> Option<&BTreeSet<usize>> {
        self.boundary.get(tag)
    }

    /// Union of all tagged boundary node sets.
    pub fn boundary_nodes(&self) -> BTreeSet<usize> {
        self.boundary.values().flatten().copied().collect()
    }

    pub fn add_boundary_tag(&mut self, tag: impl Into<String>, nodes: BTreeSet<usize>) -> Result<()> {
        if let Some(&i) = nodes.iter().next_back() {
            if i >= self.n_nodes() {
                return Err(FemError::InvalidMesh(format!("boundary node {i} out of range")));
            }
        }
        self.boundary.insert(tag.into(), nodes);
        Ok(())
    }

    /// Axis-aligned bounding box as (min, max) per coordinate.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in self.nodes.chunks_exact(d) {
            for c in 0..d {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    /// Element centroids (mean of vertices), flat E×d.
    pub fn centroids(&self) -> Vec<f64> {
        let d = self.dim();
        let k = self.kind.nodes_per_element();
        let mut out = vec![0.0; self.n_elements() * d];
        for (e, conn) in self.elements.chunks_exact(k).enumerate() {
            for &i in conn {
                for c in 0..d {
                    out[e * d + c] += self.nodes[i * d + c];
                }
            }
            for c in 0..d {
                out[e * d + c] /= k as f64;
            }
        }
        out
    }

    /// Number of elements incident to each node.
    pub fn node_valence(&self) -> Vec<usize> {
        let mut count = vec![0; self.n_nodes()];
        for &i in &self.elements {
            count[i] += 1;
        }
        count
    }

    /// Facets (edges in 2D, faces in 3D) that belong to exactly one element,
    /// each as a sorted node list, in ascending order.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        let local: &[&[usize]] = match self.kind {
            ElementKind::Tri3 => &[&[0, 1], &[1, 2], &[2, 0]],
            ElementKind::Quad4 => &[&[0, 1], &[1, 2], &[2, 3], &[3, 0]],
            ElementKind::Tet4 => &[&[1, 2, 3], &[0, 2, 3], &[0, 1, 3], &[0, 1, 2]],
        };
        let mut count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for e in 0..self.n_elements() {
            let conn = self.element(e);
            for f in local {
                let mut facet: Vec<usize> = f.iter().map(|&a| conn[a]).collect();
                facet.sort_unstable();
                *count.entry(facet).or_default() += 1;
            }
        }
        count.into_iter().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect()
    }

    /// Nodes lying on the topological boundary (on some boundary facet).
    pub fn topological_boundary_nodes(&self) -> BTreeSet<usize> {
        self.boundary_facets().into_iter().flatten().collect()
    }

    /// Content hash over element kind, coordinates and connectivity.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.kind.name().as_bytes());
        h.update((self.nodes.len() as u64).to_le_bytes());
        for x in &self.nodes {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update((self.elements.len() as u64).to_le_bytes());
        for &i in &self.elements {
            h.update((i as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    /// Returns a copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Mesh> {
        Mesh::with_boundary(
            self.kind,
            self.nodes.iter().map(|x| x * factor).collect(),
            self.elements.clone(),
            self.boundary.clone(),
        )
    }

    /// Keeps only the listed elements and drops nodes that become unused.
    /// Boundary tags are remapped; the topological boundary is re-tagged as
    /// `"boundary"`.
    pub fn retain_elements(&self, keep: impl Fn(usize, &[f64]) -> bool) -> Result<Mesh> {
        let d = self.dim();
        let centroids = self.centroids();
        let kept: Vec<usize> = (0..self.n_elements())
            .filter(|&e| keep(e, &centroids[e * d..(e + 1) * d]))
            .collect();
        let mut used = vec![false; self.n_nodes()];
        for &e in &kept {
            for &i in self.element(e) {
                used[i] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.n_nodes()];
        let mut nodes = Vec::new();
        for (i, _) in used.iter().enumerate().filter(|(_, u)| **u) {
            remap[i] = nodes.len() / d;
            nodes.extend_from_slice(self.node(i));
        }
        let elements = kept
            .iter()
            .flat_map(|&e| self.element(e).iter().map(|&i| remap[i]))
            .collect();
        let mut mesh = Mesh::new(self.kind, nodes, elements)?;
        let boundary = mesh.topological_boundary_nodes();
        mesh.add_boundary_tag("boundary", boundary)?;
        Ok(mesh)
    }
}

/// Selects all nodes whose coordinates satisfy `predicate`, in ascending
/// index order. `predicate` receives the coordinates and an absolute
/// tolerance equal to `rel_tol` times the mesh diameter.
pub fn select_boundary(mesh: &Mesh, rel_tol: f64, predicate: impl Fn(&[f64], f64) -> bool) -> BTreeSet<usize> {
    let tol = rel_tol * mesh.diameter();
    (0..mesh.n_nodes()).filter(|&i| predicate(mesh.node(i), tol)).collect()
}

/// Default relative tolerance for [`select_boundary`].
pub const DEFAULT_SELECT_TOL: f64 = 1e-9;
