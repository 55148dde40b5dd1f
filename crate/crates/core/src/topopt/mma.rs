use crate::error::{FemError, Result};

/// Method of Moving Asymptotes for one inequality constraint `g(x) ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaParams {
    /// Absolute bound on `|x_new − x|` per variable.
    pub move_limit: f64,
    /// Initial asymptote distance as a fraction of `xmax − xmin`.
    pub asy_init: f64,
    pub asy_incr: f64,
    pub asy_decr: f64,
    /// Keeps the subproblem bounds away from the asymptotes.
    pub albefa: f64,
    /// Regularization of the convex approximations.
    pub raa0: f64,
    /// Relative tolerance of the dual bisection.
    pub dual_tol: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        MmaParams {
            move_limit: 0.1,
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            dual_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Dual variable of the constraint.
    pub lambda: f64,
    /// The subproblem could not meet the constraint inside the move box and
    /// the result was projected instead.
    pub infeasible: bool,
}

/// Iteration state: asymptotes and the two previous iterates.
#[derive(Debug, Clone)]
pub struct Mma {
    pub params: MmaParams,
    pub xmin: Vec<f64>,
    pub xmax: Vec<f64>,
    iteration: usize,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
}

impl Mma {
    pub fn new(xmin: Vec<f64>, xmax: Vec<f64>, params: MmaParams) -> Result<Self> {
        if xmin.len() != xmax.len() || xmin.iter().zip(&xmax).any(|(l, u)| !(l <= u)) {
            return Err(FemError::InvalidParameter(
                "MMA bounds must satisfy xmin <= xmax".into(),
            ));
        }
        if !(params.move_limit >= 0.0) || !(params.asy_init > 0.0) {
            return Err(FemError::InvalidParameter(
                "MMA move limit must be >= 0 and asy_init > 0".into(),
            ));
        }
        let n = xmin.len();
        Ok(Mma {
            params,
            xmin,
            xmax,
            iteration: 0,
            low: vec![0.0; n],
            upp: vec![0.0; n],
            xold1: Vec::new(),
            xold2: Vec::new(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One MMA step for objective gradient `df0`, constraint value `g` and
    /// constraint gradient `dg`.
    pub fn update(&mut self, x: &[f64], df0: &[f64], g: f64, dg: &[f64]) -> Result<MmaStep> {
        let n = self.xmin.len();
        if x.len() != n || df0.len() != n || dg.len() != n {
            return Err(FemError::Shape {
                context: "MMA update".into(),
                expected: format!("{n}"),
                actual: format!("x {}, df0 {}, dg {}", x.len(), df0.len(), dg.len()),
            });
        }
        let p = self.params;
        self.iteration += 1;
        for i in 0..n {
            let span = self.xmax[i] - self.xmin[i];
            if self.iteration <= 2 {
                self.low[i] = x[i] - p.asy_init * span;
                self.upp[i] = x[i] + p.asy_init * span;
            } else {
                let z = (x[i] - self.xold1[i]) * (self.xold1[i] - self.xold2[i]);
                let factor = if z > 0.0 {
                    p.asy_incr
                } else if z < 0.0 {
                    p.asy_decr
                } else {
                    1.0
                };
                let low = x[i] - factor * (self.xold1[i] - self.low[i]);
                let upp = x[i] + factor * (self.upp[i] - self.xold1[i]);
                let (s_min, s_max) = (0.01 * span.max(1e-5), 10.0 * span.max(1e-5));
                self.low[i] = low.clamp(x[i] - s_max, x[i] - s_min);
                self.upp[i] = upp.clamp(x[i] + s_min, x[i] + s_max);
            }
        }

        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        let mut q1 = vec![0.0; n];
        let mut b = -g;
        for i in 0..n {
            let (l, u) = (self.low[i], self.upp[i]);
            alpha[i] = self.xmin[i].max(l + p.albefa * (x[i] - l)).max(x[i] - p.move_limit);
            beta[i] = self.xmax[i].min(u - p.albefa * (u - x[i])).min(x[i] + p.move_limit);
            if alpha[i] > beta[i] {
                alpha[i] = beta[i];
            }
            let span = (self.xmax[i] - self.xmin[i]).max(1e-5);
            let (ux, xl) = (u - x[i], x[i] - l);
            let (ux2, xl2) = (ux * ux, xl * xl);
            let (dp, dm) = (df0[i].max(0.0), (-df0[i]).max(0.0));
            p0[i] = (1.001 * dp + 0.001 * dm + p.raa0 / span) * ux2;
            q0[i] = (0.001 * dp + 1.001 * dm + p.raa0 / span) * xl2;
            let (cp, cm) = (dg[i].max(0.0), (-dg[i]).max(0.0));
            p1[i] = cp * ux2;
            q1[i] = cm * xl2;
            b += p1[i] / ux + q1[i] / xl;
        }

        let (low, upp) = (&self.low, &self.upp);
        let primal = |lam: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let pp = (p0[i] + lam * p1[i]).sqrt();
                    let qq = (q0[i] + lam * q1[i]).sqrt();
                    let xi = (pp * low[i] + qq * upp[i]) / (pp + qq);
                    xi.clamp(alpha[i], beta[i])
                })
                .collect()
        };
        let constraint = |xs: &[f64]| -> f64 {
            (0..n)
                .map(|i| p1[i] / (upp[i] - xs[i]) + q1[i] / (xs[i] - low[i]))
                .sum::<f64>()
                - b
        };

        let mut infeasible = false;
        let mut lambda = 0.0;
        let mut x_new = primal(0.0);
        if constraint(&x_new) > 0.0 {
            let mut hi = 1.0;
            while constraint(&primal(hi)) > 0.0 && hi < 1e40 {
                hi *= 10.0;
            }
            if constraint(&primal(hi)) > 0.0 {
                infeasible = true;
                x_new = project_linear(x, &alpha, &beta, dg, g);
            } else {
                let mut lo = 0.0;
                for _ in 0..500 {
                    let mid = 0.5 * (lo + hi);
                    if constraint(&primal(mid)) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= p.dual_tol * hi.max(1e-300) {
                        break;
                    }
                }
                lambda = hi;
                x_new = primal(hi);
            }
        }
        self.xold2 = std::mem::take(&mut self.xold1);
        self.xold1 = x.to_vec();
        Ok(MmaStep {
            x: x_new,
            lambda,
            infeasible,
        })
    }
}

/// Closest point of the box `[alpha, beta]` to `x` satisfying the
/// linearization `g + dg·(y − x) ≤ 0`; the box minimum if none exists.
fn project_linear(x: &[f64], alpha: &[f64], beta: &[f64], dg: &[f64], g: f64) -> Vec<f64> {
    let n = x.len();
    let lin = |y: &[f64]| g + (0..n).map(|i| dg[i] * (y[i] - x[i])).sum::<f64>();
    let at = |mu: f64| -> Vec<f64> { (0..n).map(|i| (x[i] - mu * dg[i]).clamp(alpha[i], beta[i])).collect() };
    if lin(&at(0.0)) <= 0.0 {
        return at(0.0);
    }
    let mut hi = 1.0;
    while lin(&at(hi)) > 0.0 && hi < 1e12 {
        hi *= 2.0;
    }
    if lin(&at(hi)) > 0.0 {
        return (0..n).map(|i| if dg[i] >= 0.0 { alpha[i] } else { beta[i] }).collect();
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lin(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}
