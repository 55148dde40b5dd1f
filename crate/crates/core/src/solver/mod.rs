//! Dirichlet condensation, Jacobi/BiCGSTAB, dense LU fallback and error metrics.

mod bicgstab;
mod condense;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{FemError, Result};
use crate::linalg::{norm2, sub};
use crate::reduce::SparseOperator;

pub use bicgstab::bicgstab;
pub use condense::{condense, CondensedSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    Iterative,
    Direct,
    /// BiCGSTAB, falling back to dense LU for small systems that fail to converge.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Largest system size handled by the dense LU fallback.
    pub direct_threshold: usize,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_iter: 10_000,
            direct_threshold: 2000,
            method: SolveMethod::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) || self.max_iter == 0 {
            return Err(FemError::InvalidParameter(format!(
                "solver needs rel_tol > 0, abs_tol >= 0, max_iter >= 1 (got {}, {}, {})",
                self.rel_tol, self.abs_tol, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖Ku − f‖₂ / ‖f‖₂` of the returned solution.
    pub rel_residual: f64,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
}

/// Dense LU solve, for small systems and test oracles.
pub fn dense_solve(a: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(FemError::Shape {
            context: "dense solve".into(),
            expected: format!("{n}×{n} with rhs {n}"),
            actual: format!("{}×{} with rhs {}", a.n_rows(), a.n_cols(), b.len()),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = DMatrix::from_row_slice(n, n, &a.to_dense());
    let x = m
        .lu()
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| FemError::Singular("dense LU found a zero pivot".into()))?;
    Ok(x.iter().copied().collect())
}

/// Solves `A x = b` with the configured method.
pub fn solve(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let direct = |start: Instant| -> Result<(Vec<f64>, SolveReport)> {
        let x = dense_solve(a, b)?;
        let rel_residual = rel_linear_residual(a, &x, b).unwrap_or(0.0);
        Ok((
            x,
            SolveReport {
                iterations: 0,
                rel_residual,
                converged: rel_residual.is_finite(),
                wall_time: start.elapsed().as_secs_f64(),
            },
        ))
    };
    let start = Instant::now();
    match config.method {
        SolveMethod::Direct => direct(start),
        SolveMethod::Iterative => bicgstab(a, b, x0, config),
        SolveMethod::Auto => {
            let (x, report) = bicgstab(a, b, x0, config)?;
            if report.converged || a.n_rows() > config.direct_threshold {
                Ok((x, report))
            } else {
                let (x, mut fallback) = direct(start)?;
                fallback.iterations = report.iterations;
                Ok((x, fallback))
            }
        }
    }
}

/// `‖u − u_ref‖₂ / ‖u_ref‖₂`.
pub fn rel_error(u: &[f64], u_ref: &[f64]) -> Result<f64> {
    if u.len() != u_ref.len() {
        return Err(FemError::Shape {
            context: "relative error".into(),
            expected: format!("{}", u_ref.len()),
            actual: format!("{}", u.len()),
        });
    }
    let denom = norm2(u_ref);
    if denom == 0.0 {
        return Err(FemError::InvalidParameter(
            "relative error against a zero reference".into(),
        ));
    }
    Ok(norm2(&sub(u, u_ref)) / denom)
}

/// `‖K u − f‖₂ / ‖f‖₂`.
pub fn rel_linear_residual(k: &SparseOperator, u: &[f64], f: &[f64]) -> Result<f64> {
    if u.len() != k.n_cols() || f.len() != k.n_rows() {
        return Err(FemError::Shape {
            context: "linear residual".into(),
            expected: format!("u: {}, f: {}", k.n_cols(), k.n_rows()),
            actual: format!("u: {}, f: {}", u.len(), f.len()),
        });
    }
    let denom = norm2(f);
    if denom == 0.0 {
        return Err(FemError::InvalidParameter("relative residual with a zero load".into()));
    }
    Ok(norm2(&sub(&k.matvec(u), f)) / denom)
}
