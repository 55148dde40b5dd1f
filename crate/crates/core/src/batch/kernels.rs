use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{GeometryBatch, PhysicalGradients, QuadratureValues};
use crate::error::{FemError, Result};
use crate::mesh::{Mesh, ReferenceTables};

/// Batched dense local matrices, flat E×k×k (row-major per element).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrices {
    pub n_elements: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

/// Batched local vectors, flat E×k.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVectors {
    pub n_elements: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl LocalMatrices {
    pub fn zeros(n_elements: usize, k: usize) -> Self {
        LocalMatrices {
            n_elements,
            k,
            data: vec![0.0; n_elements * k * k],
        }
    }

    pub fn element(&self, e: usize) -> &[f64] {
        let s = self.k * self.k;
        &self.data[e * s..(e + 1) * s]
    }

    /// `K_e · x` for one element.
    pub fn apply(&self, e: usize, x: &[f64]) -> Vec<f64> {
        let m = self.element(e);
        (0..self.k)
            .map(|a| (0..self.k).map(|b| m[a * self.k + b] * x[b]).sum())
            .collect()
    }

    /// `x_eᵀ K_e x_e` for every element, with `x_e` gathered through `element_dofs`.
    pub fn element_energies(&self, element_dofs: &[usize], x: &[f64]) -> Vec<f64> {
        let k = self.k;
        self.data
            .par_chunks(k * k)
            .zip(element_dofs.par_chunks(k))
            .map(|(m, dofs)| {
                let mut s = 0.0;
                for a in 0..k {
                    let mut row = 0.0;
                    for b in 0..k {
                        row += m[a * k + b] * x[dofs[b]];
                    }
                    s += x[dofs[a]] * row;
                }
                s
            })
            .collect()
    }

    /// Returns a copy with element `e` multiplied by `factors[e]`.
    pub fn scaled_per_element(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.n_elements {
            return Err(FemError::Shape {
                context: "per-element scaling".into(),
                expected: format!("{} factors", self.n_elements),
                actual: format!("{}", factors.len()),
            });
        }
        let s = self.k * self.k;
        let mut data = self.data.clone();
        data.par_chunks_mut(s.max(1))
            .zip(factors.par_iter())
            .for_each(|(m, &f)| m.iter_mut().for_each(|v| *v *= f));
        Ok(LocalMatrices { data, ..*self })
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_dump(path, self.n_elements, self.k, &self.data)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (n_elements, k, data) = read_dump(path, |e, k| e * k * k)?;
        Ok(LocalMatrices { n_elements, k, data })
    }
}

impl LocalVectors {
    pub fn zeros(n_elements: usize, k: usize) -> Self {
        LocalVectors {
            n_elements,
            k,
            data: vec![0.0; n_elements * k],
        }
    }

    pub fn element(&self, e: usize) -> &[f64] {
        &self.data[e * self.k..(e + 1) * self.k]
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_dump(path, self.n_elements, self.k, &self.data)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let (n_elements, k, data) = read_dump(path, |e, k| e * k)?;
        Ok(LocalVectors { n_elements, k, data })
    }
}

fn write_dump(path: &Path, n_elements: usize, k: usize, data: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| FemError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| FemError::io(path, e));
    write(&(n_elements as u64).to_le_bytes())?;
    write(&(k as u64).to_le_bytes())?;
    for v in data {
        write(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| FemError::io(path, e))
}

fn read_dump(path: &Path, len: impl Fn(usize, usize) -> usize) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| FemError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| FemError::io(path, e))?;
    let bad = |message: String| FemError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
    let (e, k) = (word(0) as usize, word(1) as usize);
    let n = len(e, k);
    if bytes.len() != 16 + 8 * n {
        return Err(bad(format!(
            "expected {n} values after the header, found {} bytes",
            bytes.len() - 16
        )));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((e, k, data))
}

/// Interpolates a nodal scalar field to all quadrature points.
pub fn interpolate_nodal(mesh: &Mesh, tables: &ReferenceTables, values: &[f64]) -> QuadratureValues {
    let (nq, k) = (tables.n_qp(), tables.k());
    let mut data = vec![0.0; mesh.n_elements() * nq];
    data.par_chunks_mut(nq.max(1))
        .zip(mesh.elements().par_chunks(k))
        .for_each(|(out, conn)| {
            for (q, o) in out.iter_mut().enumerate() {
                let b = &tables.values[q * k..(q + 1) * k];
                *o = conn.iter().zip(b).map(|(&i, &bv)| values[i] * bv).sum();
            }
        });
    QuadratureValues {
        n_elements: mesh.n_elements(),
        n_qp: nq,
        data,
    }
}

/// Quadrature weight times |det J| times coefficient, per (e, q).
fn weighted_measure(
    geom: &GeometryBatch,
    tables: &ReferenceTables,
    coeff: &QuadratureValues,
    context: &str,
) -> Result<Vec<f64>> {
    coeff.check_shape(geom.n_elements, geom.n_qp, context)?;
    let nq = geom.n_qp;
    let w = &tables.rule.weights;
    if w.len() != nq {
        return Err(FemError::Shape {
            context: format!("{context} quadrature weights"),
            expected: format!("{nq}"),
            actual: format!("{}", w.len()),
        });
    }
    Ok(geom
        .dets
        .par_iter()
        .zip(coeff.data.par_iter())
        .enumerate()
        .map(|(i, (det, c))| w[i % nq] * det.abs() * c)
        .collect())
}

/// Diffusion stiffness: `K[e,a,b] = Σ_q ŵ_q |det| C[e,q] 𝒢[e,q,a]·𝒢[e,q,b]`.
pub fn local_stiffness_diffusion(
    geom: &GeometryBatch,
    grads: &PhysicalGradients,
    coeff: &QuadratureValues,
    tables: &ReferenceTables,
) -> Result<LocalMatrices> {
    let wd = weighted_measure(geom, tables, coeff, "diffusion coefficient")?;
    let (nq, k, d) = (grads.n_qp, grads.k, grads.dim);
    let mut out = LocalMatrices::zeros(geom.n_elements, k);
    out.data
        .par_chunks_mut(k * k)
        .zip(grads.data.par_chunks(nq * k * d))
        .zip(wd.par_chunks(nq))
        .for_each(|((m, g), wd)| {
            for q in 0..nq {
                let gq = &g[q * k * d..(q + 1) * k * d];
                for a in 0..k {
                    for b in 0..k {
                        let mut dot = 0.0;
                        for r in 0..d {
                            dot += gq[a * d + r] * gq[b * d + r];
                        }
                        m[a * k + b] += wd[q] * dot;
                    }
                }
            }
        });
    Ok(out)
}

/// In-plane constitutive assumption for 2D elasticity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaneModel {
    #[default]
    PlaneStrain,
    PlaneStress,
}

/// Lamé parameters from Young's modulus and Poisson's ratio. In 2D plane
/// stress the effective λ* = 2λμ/(λ+2μ) is returned.
pub fn lame_parameters(young: f64, poisson: f64, dim: usize, plane: PlaneModel) -> Result<(f64, f64)> {
    if !(young > 0.0 && young.is_finite()) {
        return Err(FemError::InvalidParameter(format!(
            "Young's modulus must be positive, got {young}"
        )));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(FemError::InvalidParameter(format!(
            "Poisson's ratio must lie in (-1, 0.5), got {poisson} (lambda is singular at 0.5)"
        )));
    }
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    if dim == 2 && plane == PlaneModel::PlaneStress {
        Ok((2.0 * lambda * mu / (lambda + 2.0 * mu), mu))
    } else {
        Ok((lambda, mu))
    }
}

/// Lamé fields at quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct LameValues {
    pub lambda: QuadratureValues,
    pub mu: QuadratureValues,
}

impl LameValues {
    pub fn constant(n_elements: usize, n_qp: usize, lambda: f64, mu: f64) -> Self {
        LameValues {
            lambda: QuadratureValues::constant(n_elements, n_qp, lambda),
            mu: QuadratureValues::constant(n_elements, n_qp, mu),
        }
    }

    /// Lamé fields for a spatially varying Young's modulus and fixed ν.
    pub fn from_young(young: &QuadratureValues, poisson: f64, dim: usize, plane: PlaneModel) -> Result<Self> {
        let (l1, m1) = lame_parameters(1.0, poisson, dim, plane)?;
        Ok(LameValues {
            lambda: young.map(|e| l1 * e),
            mu: young.map(|e| m1 * e),
        })
    }
}

/// Linear elasticity stiffness with interleaved local DoFs `a·d + i`:
/// `K[(a,i),(b,j)] = Σ_q ŵ|det| (λ G_ai G_bj + μ (δ_ij G_a·G_b + G_aj G_bi))`.
pub fn local_stiffness_elasticity(
    geom: &GeometryBatch,
    grads: &PhysicalGradients,
    lame: &LameValues,
    tables: &ReferenceTables,
) -> Result<LocalMatrices> {
    let d = grads.dim;
    if let Some(&mu) = lame.mu.data.iter().find(|&&m| !(m > 0.0)) {
        return Err(FemError::InvalidParameter(format!(
            "shear modulus must be positive, got {mu}"
        )));
    }
    if let Some((l, m)) = lame
        .lambda
        .data
        .iter()
        .zip(&lame.mu.data)
        .find(|(&l, &m)| !(d as f64 * l + 2.0 * m > 0.0))
    {
        return Err(FemError::InvalidParameter(format!(
            "Lamé pair (λ={l}, μ={m}) is not positive definite"
        )));
    }
    let wl = weighted_measure(geom, tables, &lame.lambda, "Lamé λ")?;
    let wm = weighted_measure(geom, tables, &lame.mu, "Lamé μ")?;
    let (nq, kg) = (grads.n_qp, grads.k);
    let k = kg * d;
    let mut out = LocalMatrices::zeros(geom.n_elements, k);
    out.data
        .par_chunks_mut(k * k)
        .zip(grads.data.par_chunks(nq * kg * d))
        .zip(wl.par_chunks(nq).zip(wm.par_chunks(nq)))
        .for_each(|((m, g), (wl, wm))| {
            for q in 0..nq {
                let gq = &g[q * kg * d..(q + 1) * kg * d];
                for a in 0..kg {
                    for b in 0..kg {
                        let mut dot = 0.0;
                        for r in 0..d {
                            dot += gq[a * d + r] * gq[b * d + r];
                        }
                        for i in 0..d {
                            for j in 0..d {
                                let gai_gbj = gq[a * d + i] * gq[b * d + j];
                                let gaj_gbi = gq[a * d + j] * gq[b * d + i];
                                let diag = if i == j { dot } else { 0.0 };
                                m[(a * d + i) * k + b * d + j] += wl[q] * gai_gbj + wm[q] * (diag + gaj_gbi);
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Scalar mass: `M[e,a,b] = Σ_q ŵ_q |det| C[e,q] φ̂_a(x̂_q) φ̂_b(x̂_q)`.
pub fn local_mass(geom: &GeometryBatch, tables: &ReferenceTables, coeff: &QuadratureValues) -> Result<LocalMatrices> {
    let wd = weighted_measure(geom, tables, coeff, "mass coefficient")?;
    let (nq, k) = (geom.n_qp, tables.k());
    let mut out = LocalMatrices::zeros(geom.n_elements, k);
    out.data
        .par_chunks_mut(k * k)
        .zip(wd.par_chunks(nq))
        .for_each(|(m, wd)| {
            for q in 0..nq {
                let b = &tables.values[q * k..(q + 1) * k];
                for a in 0..k {
                    for c in 0..k {
                        m[a * k + c] += wd[q] * (b[a] * b[c]);
                    }
                }
            }
        });
    Ok(out)
}

/// Load vectors `F[e,(a,i)] = Σ_q ŵ_q |det| f_i[e,q] φ̂_a(x̂_q)`. One source
/// gives a scalar layout (k = k_geom); `n` sources give the interleaved
/// vector layout `a·n + i`.
pub fn local_load(
    geom: &GeometryBatch,
    tables: &ReferenceTables,
    sources: &[QuadratureValues],
) -> Result<LocalVectors> {
    let nc = sources.len();
    if nc == 0 || (nc != 1 && nc != geom.dim) {
        return Err(FemError::Shape {
            context: "load source components".into(),
            expected: format!("1 or {}", geom.dim),
            actual: format!("{nc}"),
        });
    }
    let wds = sources
        .iter()
        .map(|s| weighted_measure(geom, tables, s, "load source"))
        .collect::<Result<Vec<_>>>()?;
    let (nq, kg) = (geom.n_qp, tables.k());
    let k = kg * nc;
    let mut out = LocalVectors::zeros(geom.n_elements, k);
    out.data.par_chunks_mut(k).enumerate().for_each(|(e, f)| {
        for q in 0..nq {
            let b = &tables.values[q * kg..(q + 1) * kg];
            for a in 0..kg {
                for (i, wd) in wds.iter().enumerate() {
                    f[a * nc + i] += wd[e * nq + q] * b[a];
                }
            }
        }
    });
    Ok(out)
}

/// Reaction load of `−ε² u(u² − 1)` for the current nodal field.
pub fn local_reaction_load(
    mesh: &Mesh,
    geom: &GeometryBatch,
    tables: &ReferenceTables,
    u_nodal: &[f64],
    eps: f64,
) -> Result<LocalVectors> {
    if u_nodal.len() != mesh.n_nodes() {
        return Err(FemError::Shape {
            context: "reaction field".into(),
            expected: format!("{} nodal values", mesh.n_nodes()),
            actual: format!("{}", u_nodal.len()),
        });
    }
    let e2 = eps * eps;
    let u = interpolate_nodal(mesh, tables, u_nodal);
    let source = u.map(|v| -e2 * v * (v * v - 1.0));
    local_load(geom, tables, &[source])
}

/// Quadrature-point derivative of the reaction term, `−ε²(3u² − 1)`, for
/// assembling its tangent through [`local_mass`].
pub fn reaction_tangent_coefficient(u: &QuadratureValues, eps: f64) -> QuadratureValues {
    let e2 = eps * eps;
    u.map(|v| -e2 * (3.0 * v * v - 1.0))
}
