use std::sync::Arc;

use rayon::prelude::*;

use super::{solve, SolveReport, SolverConfig};
use crate::error::{FemError, Result};
use crate::reduce::{CsrPattern, SparseOperator};

const NOT_FREE: usize = usize::MAX;

/// A linear system with Dirichlet DoFs eliminated by row/column removal.
#[derive(Debug, Clone)]
pub struct CondensedSystem {
    pub n_full: usize,
    /// Free global DoFs, ascending.
    pub free: Vec<usize>,
    /// Constrained global DoFs, ascending.
    pub constrained: Vec<usize>,
    /// Prescribed values, aligned with `constrained`.
    pub prescribed: Vec<f64>,
    /// Global → free index, `usize::MAX` for constrained DoFs.
    pub full_to_free: Vec<usize>,
    pub k_ff: SparseOperator,
    pub f_f: Vec<f64>,
    /// `K_fc · g`, already subtracted from `f_f`.
    pub coupling: Vec<f64>,
}

/// Eliminates the constrained DoFs: `K_ff u_f = F_f − K_fc g`.
pub fn condense(k: &SparseOperator, f: &[f64], dofs: &[usize], values: &[f64]) -> Result<CondensedSystem> {
    let n = k.n_rows();
    if k.n_cols() != n || f.len() != n {
        return Err(FemError::Shape {
            context: "condensation".into(),
            expected: format!("square {n}×{n} with load {n}"),
            actual: format!("{}×{} with load {}", k.n_rows(), k.n_cols(), f.len()),
        });
    }
    if dofs.len() != values.len() {
        return Err(FemError::Shape {
            context: "Dirichlet values".into(),
            expected: format!("{}", dofs.len()),
            actual: format!("{}", values.len()),
        });
    }
    let mut g_full = vec![0.0; n];
    let mut is_constrained = vec![false; n];
    for (&d, &v) in dofs.iter().zip(values) {
        if d >= n {
            return Err(FemError::InvalidParameter(format!(
                "Dirichlet DoF {d} out of range (N = {n})"
            )));
        }
        if is_constrained[d] {
            return Err(FemError::InvalidParameter(format!("Dirichlet DoF {d} listed twice")));
        }
        if !v.is_finite() {
            return Err(FemError::InvalidParameter(format!(
                "Dirichlet value for DoF {d} is not finite"
            )));
        }
        is_constrained[d] = true;
        g_full[d] = v;
    }
    let mut free = Vec::with_capacity(n - dofs.len());
    let mut constrained = Vec::with_capacity(dofs.len());
    let mut full_to_free = vec![NOT_FREE; n];
    for i in 0..n {
        if is_constrained[i] {
            constrained.push(i);
        } else {
            full_to_free[i] = free.len();
            free.push(i);
        }
    }
    let prescribed: Vec<f64> = constrained.iter().map(|&i| g_full[i]).collect();

    let p = &*k.pattern;
    let mut row_offsets = Vec::with_capacity(free.len() + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut vals = Vec::new();
    let mut coupling = vec![0.0; free.len()];
    for (fi, &i) in free.iter().enumerate() {
        for pos in p.row_offsets[i]..p.row_offsets[i + 1] {
            let j = p.col_indices[pos];
            if is_constrained[j] {
                coupling[fi] += k.values[pos] * g_full[j];
            } else {
                col_indices.push(full_to_free[j]);
                vals.push(k.values[pos]);
            }
        }
        row_offsets.push(col_indices.len());
    }
    let nf = free.len();
    let k_ff = SparseOperator::new(
        Arc::new(CsrPattern {
            n_rows: nf,
            n_cols: nf,
            row_offsets,
            col_indices,
        }),
        vals,
        k.symmetric,
    )?;
    let f_f = free.iter().zip(&coupling).map(|(&i, c)| f[i] - c).collect();
    Ok(CondensedSystem {
        n_full: n,
        free,
        constrained,
        prescribed,
        full_to_free,
        k_ff,
        f_f,
        coupling,
    })
}

impl CondensedSystem {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Full-length vector with `u_f` on free DoFs and the prescribed values elsewhere.
    pub fn expand(&self, u_f: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_full];
        for (&i, &v) in self.free.iter().zip(u_f) {
            u[i] = v;
        }
        for (&i, &v) in self.constrained.iter().zip(&self.prescribed) {
            u[i] = v;
        }
        u
    }

    /// Like [`expand`](Self::expand) but with zeros on constrained DoFs.
    pub fn expand_homogeneous(&self, u_f: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_full];
        for (&i, &v) in self.free.iter().zip(u_f) {
            u[i] = v;
        }
        u
    }

    /// Restriction of a full-length vector to the free DoFs.
    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.free.par_iter().map(|&i| v[i]).collect()
    }

    /// Condensed right-hand side for another load on the same operator.
    pub fn reduce_load(&self, f: &[f64]) -> Vec<f64> {
        self.free.iter().zip(&self.coupling).map(|(&i, c)| f[i] - c).collect()
    }

    /// Solves the condensed system and returns the full-length solution.
    pub fn solve(&self, config: &SolverConfig, x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveReport)> {
        let (u_f, report) = solve(&self.k_ff, &self.f_f, x0, config)?;
        Ok((self.expand(&u_f), report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> SparseOperator {
        // two P1 elements of length 1/2 on [0, 1]
        let h = 0.5;
        let d = [
            1.0 / h,
            -1.0 / h,
            0.0,
            -1.0 / h,
            2.0 / h,
            -1.0 / h,
            0.0,
            -1.0 / h,
            1.0 / h,
        ];
        SparseOperator::from_dense(3, 3, &d, true)
    }

    #[test]
    fn three_node_chain() {
        let h = 0.5;
        let f = [h / 2.0, h, h / 2.0];
        let sys = condense(&chain(), &f, &[0, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(sys.n_free(), 1);
        assert_eq!(sys.k_ff.values, vec![4.0]);
        let (u, rep) = sys.solve(&SolverConfig::default(), None).unwrap();
        assert!(rep.converged);
        // u'' = -1 with zero ends: u(1/2) = 1/8, which P1 reproduces at nodes
        assert!((u[1] - 0.125).abs() < 1e-15);
        assert_eq!((u[0], u[2]), (0.0, 0.0));
    }

    #[test]
    fn inhomogeneous_values_move_to_rhs() {
        let sys = condense(&chain(), &[0.0; 3], &[2, 0], &[1.0, 3.0]).unwrap();
        assert_eq!(sys.constrained, vec![0, 2]);
        assert_eq!(sys.prescribed, vec![3.0, 1.0]);
        let (u, _) = sys.solve(&SolverConfig::default(), None).unwrap();
        assert!((u[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn all_or_nothing_constrained() {
        let sys = condense(&chain(), &[1.0; 3], &[0, 1, 2], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sys.n_free(), 0);
        assert_eq!(sys.expand(&[]), vec![1.0, 2.0, 3.0]);
        let sys = condense(&chain(), &[1.0, 2.0, 3.0], &[], &[]).unwrap();
        assert_eq!(sys.k_ff.values, chain().values);
        assert_eq!(sys.f_f, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn bad_dirichlet_input() {
        assert!(condense(&chain(), &[0.0; 3], &[3], &[0.0]).is_err());
        assert!(condense(&chain(), &[0.0; 3], &[1, 1], &[0.0, 0.0]).is_err());
    }
}
