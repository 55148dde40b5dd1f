//! Stage II (sparse reduce): topology-only routing matrices, deterministic
//! reduction of batched local tensors into global CSR operators, and the
//! scatter-add reference assembler.
//!
//! The binary routing matrix 𝒮_mat (N_nnz × E·k², one unit entry per column)
//! is stored as a segment map: for each global nonzero, the ascending list of
//! flattened local slots `e·k² + a·k + b` that land on it. Applying 𝒮_mat is
//! then a gather-and-sum per nonzero in that fixed order, which makes the
//! result identical to a sequential element loop and independent of the
//! number of workers.

mod oracle;
mod sparse;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::batch::{LocalMatrices, LocalVectors};
use crate::error::{FemError, Result};
use crate::mesh::{DofMap, Mesh};

pub use oracle::{scatter_add_matrix, scatter_add_oracle, scatter_add_vector, ScatterAddAssembler};
pub use sparse::{CsrPattern, SparseOperator};

/// Binary routing operators and the global sparsity pattern ℐ.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrices {
    pub n_dofs: usize,
    pub n_elements: usize,
    /// Local DoFs per element.
    pub k: usize,
    pub pattern: Arc<CsrPattern>,
    /// Segment offsets into `mat_slots`, length N_nnz + 1.
    pub mat_offsets: Vec<usize>,
    /// Flattened local matrix slots grouped by global nonzero, ascending within each group.
    pub mat_slots: Vec<usize>,
    /// Segment offsets into `vec_slots`, length N + 1.
    pub vec_offsets: Vec<usize>,
    /// Flattened local vector slots `e·k + a` grouped by global DoF.
    pub vec_slots: Vec<usize>,
}

impl RoutingMatrices {
    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn mat_segment(&self, n: usize) -> &[usize] {
        &self.mat_slots[self.mat_offsets[n]..self.mat_offsets[n + 1]]
    }

    pub fn vec_segment(&self, i: usize) -> &[usize] {
        &self.vec_slots[self.vec_offsets[i]..self.vec_offsets[i + 1]]
    }

    /// Global nonzero index of every local matrix slot (the column structure of 𝒮_mat).
    pub fn slot_targets(&self) -> Vec<usize> {
        let mut out = vec![0; self.mat_slots.len()];
        for n in 0..self.nnz() {
            for &s in self.mat_segment(n) {
                out[s] = n;
            }
        }
        out
    }

    pub fn zero_operator(&self, symmetric: bool) -> SparseOperator {
        SparseOperator::zeros(self.pattern.clone(), symmetric)
    }

    /// Writes the routing data in little-endian 64-bit words: header
    /// `N, E, k, N_nnz`, then row offsets, column indices, matrix segment
    /// offsets and slots, vector segment offsets and slots.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| FemError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = [self.n_dofs, self.n_elements, self.k, self.nnz()];
        let sections: [&[usize]; 7] = [
            &header,
            &self.pattern.row_offsets,
            &self.pattern.col_indices,
            &self.mat_offsets,
            &self.mat_slots,
            &self.vec_offsets,
            &self.vec_slots,
        ];
        for s in sections {
            for &v in s {
                w.write_all(&(v as u64).to_le_bytes())
                    .map_err(|e| FemError::io(path, e))?;
            }
        }
        w.flush().map_err(|e| FemError::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| FemError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| FemError::io(path, e))?;
        let bad = |message: &str| FemError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: message.to_string(),
        };
        if bytes.len() % 8 != 0 || bytes.len() < 32 {
            return Err(bad("routing cache is truncated"));
        }
        let words: Vec<usize> = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let (n, e, k, nnz) = (words[0], words[1], words[2], words[3]);
        let sizes = [n + 1, nnz, nnz + 1, e * k * k, n + 1, e * k];
        if words.len() != 4 + sizes.iter().sum::<usize>() {
            return Err(bad("routing cache length does not match its header"));
        }
        let mut at = 4;
        let mut take = |len: usize| {
            let v = words[at..at + len].to_vec();
            at += len;
            v
        };
        let pattern = CsrPattern {
            n_rows: n,
            n_cols: n,
            row_offsets: take(sizes[0]),
            col_indices: take(sizes[1]),
        };
        pattern
            .validate()
            .map_err(|_| bad("routing cache holds an invalid pattern"))?;
        Ok(RoutingMatrices {
            n_dofs: n,
            n_elements: e,
            k,
            pattern: Arc::new(pattern),
            mat_offsets: take(sizes[2]),
            mat_slots: take(sizes[3]),
            vec_offsets: take(sizes[4]),
            vec_slots: take(sizes[5]),
        })
    }
}

/// Cache file name for a mesh/DoF-layout pair, keyed by the mesh content hash.
pub fn routing_cache_path(dir: &Path, mesh: &Mesh, dofmap: &DofMap) -> PathBuf {
    let hex: String = mesh.content_hash().iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("routing-{}-c{}.bin", &hex[..24], dofmap.components()))
}

/// Loads routing matrices from `dir` if a matching cache exists, otherwise
/// builds and stores them.
pub fn build_routing_cached(mesh: &Mesh, dofmap: &DofMap, dir: &Path) -> Result<RoutingMatrices> {
    let path = routing_cache_path(dir, mesh, dofmap);
    if path.exists() {
        if let Ok(r) = RoutingMatrices::read_cache(&path) {
            if r.n_dofs == dofmap.n_dofs() && r.n_elements == dofmap.n_elements() && r.k == dofmap.k() {
                return Ok(r);
            }
        }
    }
    let r = build_routing(mesh, dofmap)?;
    std::fs::create_dir_all(dir).map_err(|e| FemError::io(dir, e))?;
    r.write_cache(&path)?;
    Ok(r)
}

/// Precomputes the routing matrices from mesh topology alone.
pub fn build_routing(mesh: &Mesh, dofmap: &DofMap) -> Result<RoutingMatrices> {
    if dofmap.n_elements() != mesh.n_elements() || dofmap.n_dofs() != mesh.n_nodes() * dofmap.components() {
        return Err(FemError::InvalidParameter(
            "DoF map does not belong to this mesh".into(),
        ));
    }
    let (n, ne, k) = (dofmap.n_dofs(), dofmap.n_elements(), dofmap.k());
    let dofs = dofmap.all_element_dofs();

    // DoF → (element, local index) incidence, ascending in e·k + a
    let mut vec_offsets = vec![0usize; n + 1];
    for &g in dofs {
        vec_offsets[g + 1] += 1;
    }
    for i in 0..n {
        vec_offsets[i + 1] += vec_offsets[i];
    }
    let mut vec_slots = vec![0usize; dofs.len()];
    let mut next = vec_offsets.clone();
    for (slot, &g) in dofs.iter().enumerate() {
        vec_slots[next[g]] = slot;
        next[g] += 1;
    }

    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut mat_offsets = Vec::with_capacity(ne * k * k / 2 + 1);
    mat_offsets.push(0);
    let mut mat_slots = Vec::with_capacity(ne * k * k);
    let mut cols: Vec<usize> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for i in 0..n {
        let incident = &vec_slots[vec_offsets[i]..vec_offsets[i + 1]];
        cols.clear();
        for &s in incident {
            let e = s / k;
            cols.extend_from_slice(&dofs[e * k..(e + 1) * k]);
        }
        cols.sort_unstable();
        cols.dedup();
        counts.clear();
        counts.resize(cols.len(), 0);
        for &s in incident {
            let e = s / k;
            for &j in &dofs[e * k..(e + 1) * k] {
                counts[cols.binary_search(&j).unwrap()] += 1;
            }
        }
        let base = mat_slots.len();
        let mut fill: Vec<usize> = Vec::with_capacity(cols.len());
        let mut acc = base;
        for &c in &counts {
            fill.push(acc);
            acc += c;
            mat_offsets.push(acc);
        }
        mat_slots.resize(acc, 0);
        // incident slots ascend in e, and a row appears once per element, so
        // every segment is filled in ascending slot order
        for &s in incident {
            let (e, a) = (s / k, s % k);
            for (b, &j) in dofs[e * k..(e + 1) * k].iter().enumerate() {
                let p = cols.binary_search(&j).unwrap();
                mat_slots[fill[p]] = e * k * k + a * k + b;
                fill[p] += 1;
            }
        }
        col_indices.extend_from_slice(&cols);
        row_offsets.push(col_indices.len());
    }

    Ok(RoutingMatrices {
        n_dofs: n,
        n_elements: ne,
        k,
        pattern: Arc::new(CsrPattern {
            n_rows: n,
            n_cols: n,
            row_offsets,
            col_indices,
        }),
        mat_offsets,
        mat_slots,
        vec_offsets,
        vec_slots,
    })
}

fn check_local(routing: &RoutingMatrices, n_elements: usize, k: usize, what: &str) -> Result<()> {
    if n_elements != routing.n_elements || k != routing.k {
        return Err(FemError::Shape {
            context: format!("{what} for reduction"),
            expected: format!("E={} k={}", routing.n_elements, routing.k),
            actual: format!("E={n_elements} k={k}"),
        });
    }
    Ok(())
}

/// `F = 𝒮_vec · vec(ℱ_local)`.
pub fn reduce_vector(routing: &RoutingMatrices, local: &LocalVectors) -> Result<Vec<f64>> {
    check_local(routing, local.n_elements, local.k, "local vectors")?;
    let src = &local.data;
    Ok((0..routing.n_dofs)
        .into_par_iter()
        .with_min_len(512)
        .map(|i| routing.vec_segment(i).iter().map(|&s| src[s]).sum())
        .collect())
}

/// Reduces a batch of local load vectors sharing one routing precompute.
/// Returns one global vector per batch member.
pub fn reduce_vector_batch(routing: &RoutingMatrices, batch: &[LocalVectors]) -> Result<Vec<Vec<f64>>> {
    for l in batch {
        check_local(routing, l.n_elements, l.k, "batched local vectors")?;
    }
    let nb = batch.len();
    // row-major N×B so each segment's slots are read once for all members
    let mut flat = vec![0.0; routing.n_dofs * nb];
    flat.par_chunks_mut(nb.max(1))
        .enumerate()
        .with_min_len(256)
        .for_each(|(i, out)| {
            for &s in routing.vec_segment(i) {
                for (o, l) in out.iter_mut().zip(batch) {
                    *o += l.data[s];
                }
            }
        });
    Ok((0..nb)
        .map(|b| (0..routing.n_dofs).map(|i| flat[i * nb + b]).collect())
        .collect())
}

/// `K = CSR(ℐ, 𝒮_mat · vec(𝒦_local))`.
pub fn reduce_matrix(routing: &RoutingMatrices, local: &LocalMatrices, symmetric: bool) -> Result<SparseOperator> {
    check_local(routing, local.n_elements, local.k, "local matrices")?;
    let src = &local.data;
    let mut values = vec![0.0; routing.nnz()];
    values.par_iter_mut().enumerate().with_min_len(1024).for_each(|(n, v)| {
        let mut acc = 0.0;
        for &s in routing.mat_segment(n) {
            acc += src[s];
        }
        *v = acc;
    });
    SparseOperator::new(routing.pattern.clone(), values, symmetric)
}

/// Transpose of the matrix reduction: distributes a gradient stored on the
/// global pattern back to every local slot, `𝒮_matᵀ · g`.
pub fn pull_back_matrix(routing: &RoutingMatrices, grad: &[f64]) -> Result<LocalMatrices> {
    if grad.len() != routing.nnz() {
        return Err(FemError::Shape {
            context: "pattern gradient".into(),
            expected: format!("{}", routing.nnz()),
            actual: format!("{}", grad.len()),
        });
    }
    let mut out = LocalMatrices::zeros(routing.n_elements, routing.k);
    for (n, &g) in grad.iter().enumerate() {
        for &s in routing.mat_segment(n) {
            out.data[s] = g;
        }
    }
    Ok(out)
}

/// Transpose of the vector reduction, `𝒮_vecᵀ · g`.
pub fn pull_back_vector(routing: &RoutingMatrices, grad: &[f64]) -> Result<LocalVectors> {
    if grad.len() != routing.n_dofs {
        return Err(FemError::Shape {
            context: "global vector gradient".into(),
            expected: format!("{}", routing.n_dofs),
            actual: format!("{}", grad.len()),
        });
    }
    let mut out = LocalVectors::zeros(routing.n_elements, routing.k);
    for (i, &g) in grad.iter().enumerate() {
        for &s in routing.vec_segment(i) {
            out.data[s] = g;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_grid, ElementKind};

    #[test]
    fn single_triangle_routing() {
        let mesh = Mesh::new(ElementKind::Tri3, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2]).unwrap();
        let r = build_routing(&mesh, &DofMap::scalar(&mesh)).unwrap();
        assert_eq!(r.nnz(), 9);
        assert_eq!(r.vec_slots, vec![0, 1, 2]);
        let mut slots = r.mat_slots.clone();
        slots.sort_unstable();
        assert_eq!(slots, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn two_triangles_share_an_edge() {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[1, 1]).unwrap();
        let r = build_routing(&mesh, &DofMap::scalar(&mesh)).unwrap();
        assert_eq!(r.nnz(), 14);
        let sizes: Vec<usize> = (0..4).map(|i| r.vec_segment(i).len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 2);
        // nodes 1 and 2 never share an element
        assert!(r.pattern.find(1, 2).is_none());
    }

    #[test]
    fn segments_ascend() {
        let mesh = generate_grid(ElementKind::Quad4, &[1.0, 1.0], &[3, 2]).unwrap();
        let r = build_routing(&mesh, &DofMap::vector(&mesh)).unwrap();
        for n in 0..r.nnz() {
            assert!(r.mat_segment(n).windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(r.mat_slots.len(), mesh.n_elements() * 64);
        r.pattern.validate().unwrap();
    }

    #[test]
    fn cache_round_trip() {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[3, 3]).unwrap();
        let dm = DofMap::scalar(&mesh);
        let dir = tempfile::tempdir().unwrap();
        let built = build_routing_cached(&mesh, &dm, dir.path()).unwrap();
        let path = routing_cache_path(dir.path(), &mesh, &dm);
        assert!(path.exists());
        assert_eq!(RoutingMatrices::read_cache(&path).unwrap(), built);
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[0..8], &16u64.to_le_bytes());
        assert_eq!(&raw[8..16], &18u64.to_le_bytes());
        assert_eq!(build_routing_cached(&mesh, &dm, dir.path()).unwrap(), built);
    }

    #[test]
    fn empty_mesh() {
        let mesh = Mesh::new(ElementKind::Tri3, vec![0.0, 0.0], vec![]).unwrap();
        let dm = DofMap::scalar(&mesh);
        let r = build_routing(&mesh, &dm).unwrap();
        assert_eq!(r.nnz(), 0);
        let k = reduce_matrix(&r, &LocalMatrices::zeros(0, 3), true).unwrap();
        assert_eq!(k.n_rows(), 1);
        assert_eq!(reduce_vector(&r, &LocalVectors::zeros(0, 3)).unwrap(), vec![0.0]);
    }
}
