use std::collections::HashMap;

use crate::error::{FemError, Result};

/// Classic density-weighted sensitivity filter with hat weights
/// `w_ei = max(0, r_min − |c_e − c_i|)` over element centroids.
#[derive(Debug, Clone)]
pub struct SensitivityFilter {
    pub r_min: f64,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl SensitivityFilter {
    /// Precomputes neighbor lists with a uniform grid of bucket size `r_min`.
    pub fn new(centroids: &[f64], dim: usize, r_min: f64) -> Result<Self> {
        if !(r_min > 0.0 && r_min.is_finite()) {
            return Err(FemError::InvalidParameter(format!(
                "filter radius must be positive, got {r_min}"
            )));
        }
        let n = centroids.len() / dim;
        let cell = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / r_min).floor() as i64).collect() };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for e in 0..n {
            buckets
                .entry(cell(&centroids[e * dim..(e + 1) * dim]))
                .or_default()
                .push(e);
        }
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut found: Vec<(usize, f64)> = Vec::new();
        for e in 0..n {
            let ce = &centroids[e * dim..(e + 1) * dim];
            let base = cell(ce);
            found.clear();
            let n_shift = 3usize.pow(dim as u32);
            for s in 0..n_shift {
                let mut key = base.clone();
                let mut rest = s;
                for k in key.iter_mut() {
                    *k += (rest % 3) as i64 - 1;
                    rest /= 3;
                }
                if let Some(list) = buckets.get(&key) {
                    for &i in list {
                        let ci = &centroids[i * dim..(i + 1) * dim];
                        let dist = ce.iter().zip(ci).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        let w = r_min - dist;
                        if w > 0.0 {
                            found.push((i, w));
                        }
                    }
                }
            }
            found.sort_by_key(|&(i, _)| i);
            for &(i, w) in &found {
                neighbors.push(i);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Ok(SensitivityFilter {
            r_min,
            offsets,
            neighbors,
            weights,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Neighbors of `e` (including itself) and their weights.
    pub fn neighborhood(&self, e: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[e]..self.offsets[e + 1];
        (&self.neighbors[r.clone()], &self.weights[r])
    }

    /// `(Σ_i w_ei ρ_i dc_i) / (ρ_e Σ_i w_ei)`.
    pub fn apply(&self, dc: &[f64], rho: &[f64]) -> Vec<f64> {
        (0..self.n_elements())
            .map(|e| {
                let (nb, w) = self.neighborhood(e);
                let mut num = 0.0;
                let mut den = 0.0;
                for (&i, &wi) in nb.iter().zip(w) {
                    num += wi * rho[i] * dc[i];
                    den += wi;
                }
                num / (rho[e] * den)
            })
            .collect()
    }
}
