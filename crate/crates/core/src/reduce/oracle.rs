use std::collections::BTreeSet;
use std::sync::Arc;

use super::{CsrPattern, SparseOperator};
use crate::batch::{LocalMatrices, LocalVectors};
use crate::error::{FemError, Result};
use crate::mesh::{DofMap, Mesh};

/// Classical element-loop assembler used as the reference for the
/// routing-matrix reduction. It derives its own sparsity pattern and
/// accumulates with a binary search per local entry, visiting elements and
/// local indices in ascending order.
#[derive(Debug, Clone)]
pub struct ScatterAddAssembler {
    pub pattern: Arc<CsrPattern>,
    n_dofs: usize,
    k: usize,
    element_dofs: Vec<usize>,
}

impl ScatterAddAssembler {
    pub fn new(mesh: &Mesh, dofmap: &DofMap) -> Self {
        let (n, k) = (dofmap.n_dofs(), dofmap.k());
        debug_assert_eq!(n, mesh.n_nodes() * dofmap.components());
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for e in 0..dofmap.n_elements() {
            let dofs = dofmap.element_dofs(e);
            for &i in dofs {
                rows[i].extend(dofs.iter().copied());
            }
        }
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        for r in rows {
            col_indices.extend(r);
            row_offsets.push(col_indices.len());
        }
        ScatterAddAssembler {
            pattern: Arc::new(CsrPattern {
                n_rows: n,
                n_cols: n,
                row_offsets,
                col_indices,
            }),
            n_dofs: n,
            k,
            element_dofs: dofmap.all_element_dofs().to_vec(),
        }
    }

    pub fn assemble_matrix(&self, local: &LocalMatrices, symmetric: bool) -> Result<SparseOperator> {
        self.check(local.n_elements, local.k)?;
        let k = self.k;
        let p = &*self.pattern;
        let mut values = vec![0.0; p.nnz()];
        for e in 0..local.n_elements {
            let dofs = &self.element_dofs[e * k..(e + 1) * k];
            let m = local.element(e);
            for a in 0..k {
                let i = dofs[a];
                let row = p.row(i);
                for b in 0..k {
                    let pos = p.row_offsets[i] + row.binary_search(&dofs[b]).expect("pattern covers element");
                    values[pos] += m[a * k + b];
                }
            }
        }
        SparseOperator::new(self.pattern.clone(), values, symmetric)
    }

    pub fn assemble_vector(&self, local: &LocalVectors) -> Result<Vec<f64>> {
        self.check(local.n_elements, local.k)?;
        let mut f = vec![0.0; self.n_dofs];
        for (&g, &v) in self.element_dofs.iter().zip(&local.data) {
            f[g] += v;
        }
        Ok(f)
    }

    fn check(&self, n_elements: usize, k: usize) -> Result<()> {
        let expected = if self.k == 0 {
            0
        } else {
            self.element_dofs.len() / self.k
        };
        if n_elements != expected || k != self.k {
            return Err(FemError::Shape {
                context: "scatter-add input".into(),
                expected: format!("E={expected} k={}", self.k),
                actual: format!("E={n_elements} k={k}"),
            });
        }
        Ok(())
    }
}

pub fn scatter_add_matrix(
    mesh: &Mesh,
    dofmap: &DofMap,
    local: &LocalMatrices,
    symmetric: bool,
) -> Result<SparseOperator> {
    ScatterAddAssembler::new(mesh, dofmap).assemble_matrix(local, symmetric)
}

pub fn scatter_add_vector(mesh: &Mesh, dofmap: &DofMap, local: &LocalVectors) -> Result<Vec<f64>> {
    ScatterAddAssembler::new(mesh, dofmap).assemble_vector(local)
}

/// Reference assembly of a matrix and a load vector in one call.
pub fn scatter_add_oracle(
    mesh: &Mesh,
    dofmap: &DofMap,
    k_local: &LocalMatrices,
    f_local: &LocalVectors,
) -> Result<(SparseOperator, Vec<f64>)> {
    let asm = ScatterAddAssembler::new(mesh, dofmap);
    Ok((asm.assemble_matrix(k_local, true)?, asm.assemble_vector(f_local)?))
}
