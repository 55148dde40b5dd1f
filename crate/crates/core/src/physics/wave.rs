use super::Trajectory;
use crate::error::{FemError, Result};
use crate::linalg::{dot, norm2};
use crate::reduce::SparseOperator;
use crate::solver::{condense, CondensedSystem, SolveReport, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaveScheme {
    /// `M(U²−2U¹+U⁰)/Δt² + c²KU¹ = 0`, explicit in the stiffness term.
    #[default]
    CentralDifference,
    /// Stiffness term averaged as `c²K(U²+2U¹+U⁰)/4`; unconditionally stable.
    CrankNicolson,
}

/// Two-step integrator for `M Ü + c² K U = 0` with fixed Dirichlet values.
#[derive(Debug, Clone)]
pub struct WaveIntegrator {
    pub m: SparseOperator,
    pub k: SparseOperator,
    pub dt: f64,
    pub c: f64,
    pub scheme: WaveScheme,
    pub config: SolverConfig,
    system: CondensedSystem,
    mass_system: CondensedSystem,
}

impl WaveIntegrator {
    pub fn new(
        m: &SparseOperator,
        k: &SparseOperator,
        dt: f64,
        c: f64,
        scheme: WaveScheme,
        dirichlet: (&[usize], &[f64]),
        config: SolverConfig,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(FemError::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let lhs = match scheme {
            WaveScheme::CentralDifference => m.clone(),
            WaveScheme::CrankNicolson => SparseOperator::linear_combination(1.0, m, dt * dt * c * c / 4.0, k)?,
        };
        let zeros = vec![0.0; m.n_rows()];
        let system = condense(&lhs, &zeros, dirichlet.0, dirichlet.1)?;
        let homogeneous = vec![0.0; dirichlet.0.len()];
        let mass_system = condense(m, &zeros, dirichlet.0, &homogeneous)?;
        Ok(WaveIntegrator {
            m: m.clone(),
            k: k.clone(),
            dt,
            c,
            scheme,
            config,
            system,
            mass_system,
        })
    }

    /// Free DoFs of the condensed system.
    pub fn free_dofs(&self) -> &[usize] {
        &self.system.free
    }

    /// Taylor start-up `U¹ = U⁰ + Δt V⁰ + (Δt²/2) M⁻¹(−c² K U⁰)`.
    pub fn start(&self, u0: &[f64], v0: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let ku = self.k.matvec(u0);
        let rhs: Vec<f64> = ku.iter().map(|v| -self.c * self.c * v).collect();
        let (acc_f, report) = crate::solver::solve(
            &self.mass_system.k_ff,
            &self.mass_system.restrict(&rhs),
            None,
            &self.config,
        )?;
        if !report.converged {
            return Err(FemError::NotConverged {
                context: "wave start-up mass solve".into(),
                iterations: report.iterations,
                rel_residual: report.rel_residual,
            });
        }
        let acc = self.mass_system.expand_homogeneous(&acc_f);
        let dt = self.dt;
        let mut u1: Vec<f64> = (0..u0.len())
            .map(|i| u0[i] + dt * v0[i] + 0.5 * dt * dt * acc[i])
            .collect();
        self.clamp(&mut u1);
        Ok((u1, report))
    }

    fn clamp(&self, u: &mut [f64]) {
        for (&i, &v) in self.system.constrained.iter().zip(&self.system.prescribed) {
            u[i] = v;
        }
    }

    /// Advances `(Uᵏ, Uᵏ⁺¹) → Uᵏ⁺²`.
    pub fn step(&self, u0: &[f64], u1: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let n = self.m.n_rows();
        if u0.len() != n || u1.len() != n {
            return Err(FemError::Shape {
                context: "wave states".into(),
                expected: format!("{n}"),
                actual: format!("{} and {}", u0.len(), u1.len()),
            });
        }
        let s = self.dt * self.dt * self.c * self.c;
        let extrapolated: Vec<f64> = (0..n).map(|i| 2.0 * u1[i] - u0[i]).collect();
        let m_part = self.m.matvec(&extrapolated);
        let stiff_arg: Vec<f64> = match self.scheme {
            WaveScheme::CentralDifference => u1.to_vec(),
            WaveScheme::CrankNicolson => (0..n).map(|i| (2.0 * u1[i] + u0[i]) / 4.0).collect(),
        };
        let k_part = self.k.matvec(&stiff_arg);
        let rhs: Vec<f64> = (0..n).map(|i| m_part[i] - s * k_part[i]).collect();
        let f_f = self.system.reduce_load(&rhs);
        let x0 = self.system.restrict(&extrapolated);
        let (u_f, report) = crate::solver::solve(&self.system.k_ff, &f_f, Some(&x0), &self.config)?;
        let mut u2 = self.system.expand(&u_f);
        self.clamp(&mut u2);
        Ok((u2, report))
    }

    /// Residual of the equation the scheme actually solves, on free DoFs.
    pub fn scheme_residual(&self, u0: &[f64], u1: &[f64], u2: &[f64]) -> Vec<f64> {
        let r = match self.scheme {
            WaveScheme::CentralDifference => wave_residual(&self.m, &self.k, u0, u1, u2, self.dt, self.c),
            WaveScheme::CrankNicolson => {
                let n = u0.len();
                let acc: Vec<f64> = (0..n)
                    .map(|i| (u2[i] - 2.0 * u1[i] + u0[i]) / (self.dt * self.dt))
                    .collect();
                let avg: Vec<f64> = (0..n).map(|i| (u2[i] + 2.0 * u1[i] + u0[i]) / 4.0).collect();
                let ma = self.m.matvec(&acc);
                let ku = self.k.matvec(&avg);
                (0..n).map(|i| ma[i] + self.c * self.c * ku[i]).collect()
            }
        };
        self.system.restrict(&r)
    }

    /// Runs `steps` steps from `U⁰` and initial velocity `V⁰`. The trajectory
    /// holds `steps + 1` states; residual norms are those of the scheme on
    /// free DoFs.
    pub fn run(&self, u0: &[f64], v0: &[f64], steps: usize) -> Result<Trajectory> {
        let mut u_start = u0.to_vec();
        self.clamp(&mut u_start);
        let mut traj = Trajectory {
            states: vec![u_start],
            times: vec![0.0],
            reports: Vec::new(),
            residual_norms: vec![0.0],
        };
        if steps == 0 {
            return Ok(traj);
        }
        let (u1, rep) = self.start(&traj.states[0], v0)?;
        traj.states.push(u1);
        traj.times.push(self.dt);
        traj.reports.push(rep);
        traj.residual_norms.push(0.0);
        for step in 2..=steps {
            let (a, b) = (&traj.states[step - 2], &traj.states[step - 1]);
            let (u2, rep) = self.step(a, b)?;
            if !rep.converged {
                return Err(FemError::NotConverged {
                    context: format!("wave step {step}"),
                    iterations: rep.iterations,
                    rel_residual: rep.rel_residual,
                });
            }
            let r = norm2(&self.scheme_residual(a, b, &u2));
            traj.residual_norms.push(r);
            traj.states.push(u2);
            traj.times.push(step as f64 * self.dt);
            traj.reports.push(rep);
        }
        Ok(traj)
    }
}

/// One wave step with a freshly built integrator.
#[allow(clippy::too_many_arguments)]
pub fn wave_step(
    m: &SparseOperator,
    k: &SparseOperator,
    u0: &[f64],
    u1: &[f64],
    dt: f64,
    c: f64,
    scheme: WaveScheme,
    dirichlet: (&[usize], &[f64]),
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    WaveIntegrator::new(m, k, dt, c, scheme, dirichlet, *config)?.step(u0, u1)
}

/// Taylor start-up state for zero-based stepping.
pub fn wave_start(
    m: &SparseOperator,
    k: &SparseOperator,
    u0: &[f64],
    v0: &[f64],
    dt: f64,
    c: f64,
    dirichlet: (&[usize], &[f64]),
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let integ = WaveIntegrator::new(m, k, dt, c, WaveScheme::CentralDifference, dirichlet, *config)?;
    Ok(integ.start(u0, v0)?.0)
}

/// `M(Uᵏ⁺² − 2Uᵏ⁺¹ + Uᵏ)/Δt² + c² K Uᵏ⁺¹`.
pub fn wave_residual(
    m: &SparseOperator,
    k: &SparseOperator,
    u0: &[f64],
    u1: &[f64],
    u2: &[f64],
    dt: f64,
    c: f64,
) -> Vec<f64> {
    let n = u0.len();
    let acc: Vec<f64> = (0..n).map(|i| (u2[i] - 2.0 * u1[i] + u0[i]) / (dt * dt)).collect();
    let ma = m.matvec(&acc);
    let ku = k.matvec(u1);
    (0..n).map(|i| ma[i] + c * c * ku[i]).collect()
}

/// `½‖(Uᵏ⁺¹ − Uᵏ)/Δt‖²_M + ½c² (Uᵏ⁺¹)ᵀ K Uᵏ`, conserved by the central-difference scheme.
pub fn wave_energy(m: &SparseOperator, k: &SparseOperator, u0: &[f64], u1: &[f64], dt: f64, c: f64) -> f64 {
    let v: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| (a - b) / dt).collect();
    0.5 * dot(&v, &m.matvec(&v)) + 0.5 * c * c * dot(u1, &k.matvec(u0))
}
