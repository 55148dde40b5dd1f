use std::time::Instant;

use super::{Discretization, Trajectory};
use crate::batch::{interpolate_nodal, local_mass, local_reaction_load, reaction_tangent_coefficient};
use crate::error::{FemError, Result};
use crate::linalg::norm2;
use crate::reduce::{reduce_matrix, reduce_vector, SparseOperator};
use crate::solver::{condense, solve, SolveReport, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub initial_norm: f64,
    pub residual_norm: f64,
    pub linear_iterations: usize,
}

/// Backward-Euler Allen–Cahn stepper:
/// `R(U) = M(U − Uᵏ)/Δt + a² K U − F(U)` with `F` the load of `−ε² u(u² − 1)`.
#[derive(Debug, Clone)]
pub struct AllenCahn<'a> {
    pub disc: &'a Discretization,
    pub m: SparseOperator,
    pub k: SparseOperator,
    pub dt: f64,
    pub a: f64,
    pub eps: f64,
    pub newton: NewtonConfig,
    pub solver: SolverConfig,
    pub dirichlet_dofs: Vec<usize>,
    pub dirichlet_values: Vec<f64>,
}

impl<'a> AllenCahn<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        disc: &'a Discretization,
        m: &SparseOperator,
        k: &SparseOperator,
        dt: f64,
        a: f64,
        eps: f64,
        newton: NewtonConfig,
        solver: SolverConfig,
        dirichlet: (&[usize], &[f64]),
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(FemError::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if !(newton.tol > 0.0) || newton.max_iter == 0 {
            return Err(FemError::InvalidParameter(
                "Newton tolerance must be positive and max_iter >= 1".into(),
            ));
        }
        if disc.dofmap.components() != 1 {
            return Err(FemError::InvalidParameter(
                "Allen–Cahn needs a scalar discretization".into(),
            ));
        }
        Ok(AllenCahn {
            disc,
            m: m.clone(),
            k: k.clone(),
            dt,
            a,
            eps,
            newton,
            solver,
            dirichlet_dofs: dirichlet.0.to_vec(),
            dirichlet_values: dirichlet.1.to_vec(),
        })
    }

    /// Global reaction load `F(U)`.
    pub fn reaction_load(&self, u: &[f64]) -> Result<Vec<f64>> {
        let d = self.disc;
        let local = local_reaction_load(&d.mesh, &d.mass.geom, &d.mass.tables, u, self.eps)?;
        reduce_vector(&d.routing, &local)
    }

    /// `∂F/∂U`, a mass-type operator with coefficient `−ε²(3u² − 1)`.
    pub fn reaction_tangent(&self, u: &[f64]) -> Result<SparseOperator> {
        let d = self.disc;
        let uq = interpolate_nodal(&d.mesh, &d.mass.tables, u);
        let coeff = reaction_tangent_coefficient(&uq, self.eps);
        reduce_matrix(&d.routing, &local_mass(&d.mass.geom, &d.mass.tables, &coeff)?, true)
    }

    pub fn residual(&self, u_prev: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let f = self.reaction_load(u)?;
        Ok(allen_cahn_residual(&self.m, &self.k, u_prev, u, self.dt, self.a, &f))
    }

    fn free_norm(&self, r: &[f64]) -> f64 {
        let mut masked = r.to_vec();
        for &i in &self.dirichlet_dofs {
            masked[i] = 0.0;
        }
        norm2(&masked)
    }

    /// One backward-Euler step solved by Newton's method; converged when
    /// `‖R‖₂ < tol · max(1, ‖R₀‖₂)` over free DoFs.
    pub fn step(&self, u_prev: &[f64]) -> Result<(Vec<f64>, NewtonReport)> {
        let mut u = u_prev.to_vec();
        for (&i, &v) in self.dirichlet_dofs.iter().zip(&self.dirichlet_values) {
            u[i] = v;
        }
        let mut r = self.residual(u_prev, &u)?;
        let r0 = self.free_norm(&r);
        let target = self.newton.tol * r0.max(1.0);
        let mut norm = r0;
        let mut linear_iterations = 0;
        let mut iterations = 0;
        let homogeneous = vec![0.0; self.dirichlet_dofs.len()];
        while norm >= target {
            if iterations == self.newton.max_iter {
                return Err(FemError::NotConverged {
                    context: "Allen–Cahn Newton iteration".into(),
                    iterations,
                    rel_residual: norm,
                });
            }
            iterations += 1;
            let tangent = self.reaction_tangent(&u)?;
            let j = SparseOperator::linear_combination(1.0 / self.dt, &self.m, self.a * self.a, &self.k)?;
            let j = SparseOperator::linear_combination(1.0, &j, -1.0, &tangent)?;
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let sys = condense(&j, &neg_r, &self.dirichlet_dofs, &homogeneous)?;
            let (delta, rep) = solve(&sys.k_ff, &sys.f_f, None, &self.solver)?;
            if !rep.converged {
                return Err(FemError::NotConverged {
                    context: "Allen–Cahn Newton linear solve".into(),
                    iterations: rep.iterations,
                    rel_residual: rep.rel_residual,
                });
            }
            linear_iterations += rep.iterations;
            for (&i, d) in sys.free.iter().zip(&delta) {
                u[i] += d;
            }
            r = self.residual(u_prev, &u)?;
            norm = self.free_norm(&r);
            if !norm.is_finite() {
                return Err(FemError::NotConverged {
                    context: "Allen–Cahn Newton iteration diverged".into(),
                    iterations,
                    rel_residual: norm,
                });
            }
        }
        Ok((
            u,
            NewtonReport {
                iterations,
                initial_norm: r0,
                residual_norm: norm,
                linear_iterations,
            },
        ))
    }

    pub fn run(&self, u0: &[f64], steps: usize) -> Result<Trajectory> {
        let mut start = u0.to_vec();
        for (&i, &v) in self.dirichlet_dofs.iter().zip(&self.dirichlet_values) {
            start[i] = v;
        }
        let mut traj = Trajectory {
            states: vec![start],
            times: vec![0.0],
            reports: Vec::new(),
            residual_norms: vec![0.0],
        };
        for step in 1..=steps {
            let t0 = Instant::now();
            let (u, rep) = self.step(&traj.states[step - 1]).map_err(|e| match e {
                FemError::NotConverged {
                    context,
                    iterations,
                    rel_residual,
                } => FemError::NotConverged {
                    context: format!("{context} at step {step}"),
                    iterations,
                    rel_residual,
                },
                other => other,
            })?;
            traj.states.push(u);
            traj.times.push(step as f64 * self.dt);
            traj.residual_norms.push(rep.residual_norm);
            traj.reports.push(SolveReport {
                iterations: rep.iterations,
                rel_residual: rep.residual_norm / rep.initial_norm.max(1.0),
                converged: true,
                wall_time: t0.elapsed().as_secs_f64(),
            });
        }
        Ok(traj)
    }
}

/// `M(Uᵏ⁺¹ − Uᵏ)/Δt + a² K Uᵏ⁺¹ − F(Uᵏ⁺¹)` for a given reaction load.
pub fn allen_cahn_residual(
    m: &SparseOperator,
    k: &SparseOperator,
    u_prev: &[f64],
    u: &[f64],
    dt: f64,
    a: f64,
    f: &[f64],
) -> Vec<f64> {
    let n = u.len();
    let du: Vec<f64> = (0..n).map(|i| (u[i] - u_prev[i]) / dt).collect();
    let md = m.matvec(&du);
    let ku = k.matvec(u);
    (0..n).map(|i| md[i] + a * a * ku[i] - f[i]).collect()
}

/// One Allen–Cahn step with a freshly built stepper.
#[allow(clippy::too_many_arguments)]
pub fn allen_cahn_step(
    disc: &Discretization,
    m: &SparseOperator,
    k: &SparseOperator,
    u_prev: &[f64],
    dt: f64,
    a: f64,
    eps: f64,
    newton: NewtonConfig,
    dirichlet: (&[usize], &[f64]),
) -> Result<(Vec<f64>, NewtonReport)> {
    AllenCahn::new(disc, m, k, dt, a, eps, newton, SolverConfig::default(), dirichlet)?.step(u_prev)
}
