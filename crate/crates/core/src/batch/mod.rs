//! Stage I (batch-map): element geometry, push-forward gradients,
//! coefficient evaluation and local operator kernels.
//!
//! Every function here consumes and produces whole-batch tensors stored
//! element-major and contiguous. The element axis is split into chunks for
//! data parallelism; each element's result depends only on its own inputs,
//! so outputs are bitwise independent of the worker count.

mod coefficient;
mod kernels;

use rayon::prelude::*;

use crate::error::{FemError, Result};
use crate::mesh::{ElementKind, Mesh, ReferenceTables};

pub use coefficient::{CoefficientField, QuadratureValues};
pub use kernels::{
    interpolate_nodal, lame_parameters, local_load, local_mass, local_reaction_load, local_stiffness_diffusion,
    local_stiffness_elasticity, reaction_tangent_coefficient, LameValues, LocalMatrices, LocalVectors, PlaneModel,
};

/// Batched element geometry at every quadrature point.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryBatch {
    pub kind: ElementKind,
    pub n_elements: usize,
    pub n_qp: usize,
    pub dim: usize,
    /// E×k_geom×d element vertex coordinates 𝒳.
    pub coords: Vec<f64>,
    /// E×Q×d×d Jacobians, row-major `J[r][c] = ∂x_r/∂x̂_c`.
    pub jacobians: Vec<f64>,
    /// E×Q determinants.
    pub dets: Vec<f64>,
    /// E×Q×d×d inverse-transpose Jacobians.
    pub inv_t: Vec<f64>,
    /// E×Q×d physical images of the quadrature points.
    pub qpoints: Vec<f64>,
}

impl GeometryBatch {
    pub fn det(&self, e: usize, q: usize) -> f64 {
        self.dets[e * self.n_qp + q]
    }

    pub fn jacobian(&self, e: usize, q: usize) -> &[f64] {
        let s = self.dim * self.dim;
        let i = e * self.n_qp + q;
        &self.jacobians[i * s..(i + 1) * s]
    }

    pub fn qpoint(&self, e: usize, q: usize) -> &[f64] {
        let i = e * self.n_qp + q;
        &self.qpoints[i * self.dim..(i + 1) * self.dim]
    }

    /// Physical measure of each element (Σ_q ŵ_q |det J|).
    pub fn element_measures(&self, tables: &ReferenceTables) -> Vec<f64> {
        (0..self.n_elements)
            .map(|e| {
                (0..self.n_qp)
                    .map(|q| tables.rule.weights[q] * self.det(e, q).abs())
                    .sum()
            })
            .collect()
    }
}

/// Push-forward basis gradients 𝒢 = J⁻ᵀ ∇B̂, flat E×Q×k×d.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalGradients {
    pub n_elements: usize,
    pub n_qp: usize,
    pub k: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl PhysicalGradients {
    /// Gradients of all basis functions at one quadrature point, k×d.
    pub fn at(&self, e: usize, q: usize) -> &[f64] {
        let s = self.k * self.dim;
        let i = e * self.n_qp + q;
        &self.data[i * s..(i + 1) * s]
    }
}

fn invert_transpose(j: &[f64], d: usize, out: &mut [f64]) -> f64 {
    match d {
        2 => {
            let det = j[0] * j[3] - j[1] * j[2];
            // (J⁻¹)ᵀ = cof(J) / det
            out[0] = j[3] / det;
            out[1] = -j[2] / det;
            out[2] = -j[1] / det;
            out[3] = j[0] / det;
            det
        }
        _ => {
            let c00 = j[4] * j[8] - j[5] * j[7];
            let c01 = j[5] * j[6] - j[3] * j[8];
            let c02 = j[3] * j[7] - j[4] * j[6];
            let c10 = j[2] * j[7] - j[1] * j[8];
            let c11 = j[0] * j[8] - j[2] * j[6];
            let c12 = j[1] * j[6] - j[0] * j[7];
            let c20 = j[1] * j[5] - j[2] * j[4];
            let c21 = j[2] * j[3] - j[0] * j[5];
            let c22 = j[0] * j[4] - j[1] * j[3];
            let det = j[0] * c00 + j[1] * c01 + j[2] * c02;
            for (o, c) in out.iter_mut().zip([c00, c01, c02, c10, c11, c12, c20, c21, c22]) {
                *o = c / det;
            }
            det
        }
    }
}

/// Computes Jacobians, determinants, inverse transposes and physical
/// quadrature points for every element.
pub fn batch_geometry(mesh: &Mesh, tables: &ReferenceTables) -> Result<GeometryBatch> {
    if tables.kind() != mesh.kind() {
        return Err(FemError::InvalidParameter(format!(
            "reference tables are for {} but the mesh is {}",
            tables.kind().name(),
            mesh.kind().name()
        )));
    }
    let (n_el, nq, d, k) = (mesh.n_elements(), tables.n_qp(), mesh.dim(), tables.k());
    let mut coords = vec![0.0; n_el * k * d];
    coords
        .par_chunks_mut(k * d)
        .zip(mesh.elements().par_chunks(k))
        .for_each(|(x, conn)| {
            for (a, &i) in conn.iter().enumerate() {
                x[a * d..(a + 1) * d].copy_from_slice(mesh.node(i));
            }
        });

    let dd = d * d;
    let mut jacobians = vec![0.0; n_el * nq * dd];
    let mut dets = vec![0.0; n_el * nq];
    let mut inv_t = vec![0.0; n_el * nq * dd];
    let mut qpoints = vec![0.0; n_el * nq * d];
    let affine = mesh.kind().is_affine();

    jacobians
        .par_chunks_mut(nq * dd)
        .zip(dets.par_chunks_mut(nq))
        .zip(inv_t.par_chunks_mut(nq * dd))
        .zip(qpoints.par_chunks_mut(nq * d))
        .zip(coords.par_chunks(k * d))
        .for_each(|((((jac, det), inv), qp), x)| {
            for q in 0..nq {
                let jq = &mut jac[q * dd..(q + 1) * dd];
                if affine && q > 0 {
                    // constant Jacobian: broadcast the first point
                    let (first, rest) = jac.split_at_mut(dd);
                    rest[(q - 1) * dd..q * dd].copy_from_slice(first);
                    let (first, rest) = inv.split_at_mut(dd);
                    rest[(q - 1) * dd..q * dd].copy_from_slice(first);
                    det[q] = det[0];
                } else {
                    let g = &tables.gradients[q * k * d..(q + 1) * k * d];
                    for r in 0..d {
                        for c in 0..d {
                            jq[r * d + c] = (0..k).map(|a| x[a * d + r] * g[a * d + c]).sum();
                        }
                    }
                    det[q] = invert_transpose(jq, d, &mut inv[q * dd..(q + 1) * dd]);
                }
                let b = &tables.values[q * k..(q + 1) * k];
                for r in 0..d {
                    qp[q * d + r] = (0..k).map(|a| x[a * d + r] * b[a]).sum();
                }
            }
        });

    if let Some(i) = dets.iter().position(|&v| !(v > 0.0)) {
        return Err(FemError::Orientation {
            element: i / nq,
            det: dets[i],
        });
    }
    Ok(GeometryBatch {
        kind: mesh.kind(),
        n_elements: n_el,
        n_qp: nq,
        dim: d,
        coords,
        jacobians,
        dets,
        inv_t,
        qpoints,
    })
}

/// Maps reference gradients to physical space: 𝒢[e,q,a,:] = J⁻ᵀ[e,q] · Ĝ[q,a,:].
pub fn push_forward(geom: &GeometryBatch, tables: &ReferenceTables) -> PhysicalGradients {
    let (nq, d, k) = (geom.n_qp, geom.dim, tables.k());
    let dd = d * d;
    let mut data = vec![0.0; geom.n_elements * nq * k * d];
    data.par_chunks_mut(nq * k * d)
        .zip(geom.inv_t.par_chunks(nq * dd))
        .for_each(|(out, inv)| {
            for q in 0..nq {
                let m = &inv[q * dd..(q + 1) * dd];
                let g = &tables.gradients[q * k * d..(q + 1) * k * d];
                for a in 0..k {
                    for r in 0..d {
                        out[(q * k + a) * d + r] = (0..d).map(|c| m[r * d + c] * g[a * d + c]).sum();
                    }
                }
            }
        });
    PhysicalGradients {
        n_elements: geom.n_elements,
        n_qp: nq,
        k,
        dim: d,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_grid, reference_tables};

    fn single_triangle(p: [[f64; 2]; 3]) -> Mesh {
        Mesh::new(ElementKind::Tri3, p.iter().flatten().copied().collect(), vec![0, 1, 2]).unwrap()
    }

    #[test]
    fn reference_triangle_identity() {
        let mesh = single_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let t = reference_tables(ElementKind::Tri3, 2).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        for q in 0..g.n_qp {
            assert_eq!(g.jacobian(0, q), &[1.0, 0.0, 0.0, 1.0]);
            assert_eq!(g.det(0, q), 1.0);
        }
        let pg = push_forward(&g, &t);
        for q in 0..g.n_qp {
            assert_eq!(pg.at(0, q), &t.gradients[q * 6..(q + 1) * 6]);
        }
    }

    #[test]
    fn stretched_triangle() {
        let mesh = single_triangle([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        let t = reference_tables(ElementKind::Tri3, 1).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        assert_eq!(g.jacobian(0, 0), &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.det(0, 0), 2.0);
        let pg = push_forward(&g, &t);
        let grads = pg.at(0, 0);
        let reference = [-1.0, -1.0, 1.0, 0.0, 0.0, 1.0];
        for a in 0..3 {
            assert_eq!(grads[a * 2], reference[a * 2] / 2.0);
            assert_eq!(grads[a * 2 + 1], reference[a * 2 + 1]);
        }
    }

    #[test]
    fn scaling_multiplies_determinants() {
        let mesh = generate_grid(ElementKind::Quad4, &[1.0, 2.0], &[3, 2]).unwrap();
        let t = reference_tables(ElementKind::Quad4, 3).unwrap();
        let g1 = batch_geometry(&mesh, &t).unwrap();
        let g2 = batch_geometry(&mesh.scaled(3.0).unwrap(), &t).unwrap();
        for (a, b) in g1.dets.iter().zip(&g2.dets) {
            assert!((b - 9.0 * a).abs() < 1e-13 * b.abs());
        }
    }

    #[test]
    fn affine_jacobians_constant_over_points() {
        let mesh = generate_grid(ElementKind::Tet4, &[1.0, 2.0, 0.5], &[2, 2, 2]).unwrap();
        let t = reference_tables(ElementKind::Tet4, 4).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        for e in 0..g.n_elements {
            for q in 1..g.n_qp {
                assert_eq!(g.jacobian(e, q), g.jacobian(e, 0));
            }
        }
    }

    /// P1 gradients from the edge-vector formula: ∇φ_a = rot90(x_c − x_b) / (2A).
    #[test]
    fn random_triangle_matches_edge_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = reference_tables(ElementKind::Tri3, 1).unwrap();
        for _ in 0..50 {
            let p: Vec<[f64; 2]> = (0..3)
                .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                .collect();
            let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
            if area2.abs() < 0.1 {
                continue;
            }
            let p = if area2 > 0.0 {
                [p[0], p[1], p[2]]
            } else {
                [p[0], p[2], p[1]]
            };
            let area2 = area2.abs();
            let mesh = single_triangle(p);
            let g = batch_geometry(&mesh, &t).unwrap();
            let pg = push_forward(&g, &t);
            for a in 0..3 {
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                let expected = [(p[b][1] - p[c][1]) / area2, (p[c][0] - p[b][0]) / area2];
                for r in 0..2 {
                    assert!((pg.at(0, 0)[a * 2 + r] - expected[r]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_sum_to_zero() {
        let mesh = generate_grid(ElementKind::Quad4, &[1.0, 1.0], &[3, 3]).unwrap();
        let t = reference_tables(ElementKind::Quad4, 4).unwrap();
        let pg = push_forward(&batch_geometry(&mesh, &t).unwrap(), &t);
        for e in 0..pg.n_elements {
            for q in 0..pg.n_qp {
                for r in 0..2 {
                    let s: f64 = (0..4).map(|a| pg.at(e, q)[a * 2 + r]).sum();
                    assert!(s.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn mismatched_tables_rejected() {
        let mesh = generate_grid(ElementKind::Quad4, &[1.0, 1.0], &[1, 1]).unwrap();
        let t = reference_tables(ElementKind::Tri3, 1).unwrap();
        assert!(batch_geometry(&mesh, &t).is_err());
    }
}
