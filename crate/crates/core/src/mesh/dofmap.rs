use std::collections::BTreeSet;

use super::Mesh;
use crate::error::{FemError, Result};

/// Local→global DoF map with node-major interleaved numbering:
/// `global = node * components + component`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    components: usize,
    n_dofs: usize,
    k: usize,
    /// Flat E×k global indices, local index `a * components + c`.
    element_dofs: Vec<usize>,
    dirichlet: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, components: usize) -> Result<Self> {
        if components == 0 || components > 3 {
            return Err(FemError::InvalidParameter(format!(
                "components per node must be 1..=3, got {components}"
            )));
        }
        let k = mesh.kind().nodes_per_element() * components;
        let mut element_dofs = Vec::with_capacity(mesh.n_elements() * k);
        for &node in mesh.elements() {
            for c in 0..components {
                element_dofs.push(node * components + c);
            }
        }
        Ok(DofMap {
            components,
            n_dofs: mesh.n_nodes() * components,
            k,
            element_dofs,
            dirichlet: Vec::new(),
        })
    }

    pub fn scalar(mesh: &Mesh) -> Self {
        Self::new(mesh, 1).expect("one component is always valid")
    }

    pub fn vector(mesh: &Mesh) -> Self {
        Self::new(mesh, mesh.dim()).expect("mesh dimension is 2 or 3")
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Local DoF count per element.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_elements(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.element_dofs.len() / self.k
        }
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.element_dofs[e * self.k..(e + 1) * self.k]
    }

    pub fn all_element_dofs(&self) -> &[usize] {
        &self.element_dofs
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        node * self.components + component
    }

    /// Constrains every component of the given nodes.
    pub fn constrain_nodes(&mut self, nodes: &BTreeSet<usize>) {
        let mut set: BTreeSet<usize> = self.dirichlet.iter().copied().collect();
        for &n in nodes {
            for c in 0..self.components {
                set.insert(self.dof(n, c));
            }
        }
        self.dirichlet = set.into_iter().collect();
    }

    /// Constrains a single component of the given nodes.
    pub fn constrain_component(&mut self, nodes: &BTreeSet<usize>, component: usize) {
        let mut set: BTreeSet<usize> = self.dirichlet.iter().copied().collect();
        set.extend(nodes.iter().map(|&n| self.dof(n, component)));
        self.dirichlet = set.into_iter().collect();
    }

    /// Constrained global DoFs, ascending.
    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_grid, ElementKind};

    #[test]
    fn interleaved_numbering() {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[1, 1]).unwrap();
        let dm = DofMap::vector(&mesh);
        assert_eq!(dm.k(), 6);
        assert_eq!(dm.n_dofs(), 8);
        // element 0 is nodes (0, 1, 3)
        assert_eq!(dm.element_dofs(0), &[0, 1, 2, 3, 6, 7]);
    }

    #[test]
    fn shared_nodes_map_identically() {
        let mesh = generate_grid(ElementKind::Quad4, &[2.0, 1.0], &[2, 1]).unwrap();
        let dm = DofMap::vector(&mesh);
        for e in 0..mesh.n_elements() {
            for (a, &node) in mesh.element(e).iter().enumerate() {
                for c in 0..2 {
                    assert_eq!(dm.element_dofs(e)[a * 2 + c], node * 2 + c);
                }
            }
        }
    }

    #[test]
    fn constraints_are_sorted_unique() {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[2, 2]).unwrap();
        let mut dm = DofMap::vector(&mesh);
        dm.constrain_component(&[4, 1].into_iter().collect(), 1);
        dm.constrain_nodes(&[1].into_iter().collect());
        assert_eq!(dm.dirichlet_dofs(), &[2, 3, 9]);
    }
}
