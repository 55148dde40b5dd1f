use std::time::Instant;

use super::{SolveReport, SolverConfig};
use crate::error::{FemError, Result};
use crate::linalg::{dot, norm2};
use crate::reduce::SparseOperator;

enum Outcome {
    Converged,
    Breakdown,
    Exhausted,
}

/// Jacobi-preconditioned BiCGSTAB.
///
/// Stops when the true residual satisfies `‖b − Ax‖ < rel_tol·‖b‖`. If that
/// target cannot be reached (breakdown after one restart, or the iteration
/// budget runs out) the solve still counts as converged when
/// `‖b − Ax‖ < abs_tol`. Non-convergence is reported, not raised.
pub fn bicgstab(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(FemError::Shape {
            context: "BiCGSTAB system".into(),
            expected: format!("square {n}×{n} with rhs {n}"),
            actual: format!("{}×{} with rhs {}", a.n_rows(), a.n_cols(), b.len()),
        });
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
        return Err(FemError::Singular(format!("zero Jacobi diagonal entry at row {i}")));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                rel_residual: 0.0,
                converged: true,
                wall_time: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let mut x = match x0 {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => {
            return Err(FemError::Shape {
                context: "BiCGSTAB initial guess".into(),
                expected: format!("{n}"),
                actual: format!("{}", v.len()),
            })
        }
        None => vec![0.0; n],
    };
    let target = config.rel_tol * b_norm;
    let mut iterations = 0;
    let mut breakdowns = 0;
    let true_residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let ax = a.matvec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let nr = norm2(&r);
        (r, nr)
    };

    let (mut r, mut r_norm) = true_residual(&x);
    loop {
        if r_norm < target {
            break;
        }
        match cycle(a, &inv_diag, &mut x, r, target, config.max_iter, &mut iterations) {
            Outcome::Converged => {}
            Outcome::Breakdown => breakdowns += 1,
            Outcome::Exhausted => {}
        }
        let (r_new, n_new) = true_residual(&x);
        r = r_new;
        r_norm = n_new;
        if r_norm < target || iterations >= config.max_iter || breakdowns > 1 {
            break;
        }
        // recursive residual drifted from the true one, or one breakdown:
        // restart from the current iterate
    }
    let converged = r_norm.is_finite() && (r_norm < target || r_norm < config.abs_tol);
    Ok((
        x,
        SolveReport {
            iterations,
            rel_residual: r_norm / b_norm,
            converged,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

fn cycle(
    a: &SparseOperator,
    inv_diag: &[f64],
    x: &mut [f64],
    mut r: Vec<f64>,
    target: f64,
    max_iter: usize,
    iterations: &mut usize,
) -> Outcome {
    let n = x.len();
    let r_hat = r.clone();
    let r_hat_norm = norm2(&r_hat);
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut s = vec![0.0; n];
    let tiny = f64::EPSILON * f64::EPSILON;
    while *iterations < max_iter {
        *iterations += 1;
        let rho_new = dot(&r_hat, &r);
        if !rho_new.is_finite() || rho_new.abs() <= tiny * r_hat_norm * norm2(&r) {
            return Outcome::Breakdown;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.matvec_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if !rv.is_finite() || rv == 0.0 {
            return Outcome::Breakdown;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) < target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Outcome::Converged;
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.matvec_into(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) < target {
            return Outcome::Converged;
        }
        if !omega.is_finite() || omega == 0.0 {
            return Outcome::Breakdown;
        }
    }
    Outcome::Exhausted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = SparseOperator::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, rep) = bicgstab(&a, &b, None, &SolverConfig::default()).unwrap();
        assert_eq!(x, b);
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
    }

    #[test]
    fn diagonal_with_jacobi_is_exact() {
        let a = SparseOperator::from_dense(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.25], true);
        let (x, rep) = bicgstab(&a, &[1.0, 1.0, 1.0], None, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(x, vec![0.5, 0.2, 4.0]);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let a = SparseOperator::identity(3);
        let (x, rep) = bicgstab(&a, &[0.0; 3], None, &SolverConfig::default()).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn nonsymmetric_system() {
        let a = SparseOperator::from_dense(3, 3, &[4.0, 1.0, 0.0, -1.0, 3.0, 1.0, 0.0, 2.0, 5.0], false);
        let b = [1.0, 2.0, 3.0];
        let (x, rep) = bicgstab(&a, &b, None, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        let r = a.matvec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let n = 50;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 2.0;
            if i > 0 {
                d[i * n + i - 1] = -1.0;
                d[(i - 1) * n + i] = -1.0;
            }
        }
        let a = SparseOperator::from_dense(n, n, &d, true);
        let cfg = SolverConfig {
            max_iter: 2,
            abs_tol: 0.0,
            ..SolverConfig::default()
        };
        let (_, rep) = bicgstab(&a, &vec![1.0; n], None, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
    }

    #[test]
    fn zero_diagonal_rejected() {
        let a = SparseOperator::from_dense(2, 2, &[0.0, 1.0, 1.0, 0.0], true);
        assert!(bicgstab(&a, &[1.0, 1.0], None, &SolverConfig::default()).is_err());
    }
}
