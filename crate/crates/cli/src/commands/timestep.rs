use std::path::Path;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f, write_csv};
use crate::setup::{build_mesh, dirichlet_nodes};
use tg_core::batch::CoefficientField;
use tg_core::io::{write_vtk, VtkField};
use tg_core::physics::{
    multi_frequency_sine, nodal_values, sine_series_coefficients, AllenCahn, Discretization, NewtonConfig, Trajectory,
    WaveIntegrator,
};
use tg_core::reduce::reduce_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Wave,
    AllenCahn,
}

pub fn cmd_timestep(cfg: &RunConfig, out: &Path, seed: u64) -> CliResult<Trajectory> {
    let (p, t) = (&cfg.problem, &cfg.time);
    let kind = match p.kind.as_str() {
        "wave" => Kind::Wave,
        "allen_cahn" | "allen-cahn" | "ac" => Kind::AllenCahn,
        other => {
            return Err(CliError::config(format!(
                "timestep needs problem.kind wave or allen_cahn, got {other:?}"
            )))
        }
    };
    let dt = t.dt.unwrap_or(if kind == Kind::Wave { 5e-4 } else { 1e-4 });
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::config(format!("time.dt must be positive, got {dt}")));
    }
    if t.steps == 0 {
        return Err(CliError::config("time.steps must be >= 1"));
    }
    if kind == Kind::Wave && !(t.c > 0.0 && t.c.is_finite()) {
        return Err(CliError::config(format!("time.c must be positive, got {}", t.c)));
    }
    if kind == Kind::AllenCahn && !(t.eps > 0.0 && t.a >= 0.0 && t.a.is_finite() && t.eps.is_finite()) {
        return Err(CliError::config(format!(
            "time.a must be >= 0 and time.eps > 0, got {} and {}",
            t.a, t.eps
        )));
    }
    if !(t.newton_tol > 0.0) || t.newton_max_iter == 0 {
        return Err(CliError::config(
            "time.newton_tol must be positive and time.newton_max_iter >= 1",
        ));
    }
    let scheme = t.wave_scheme()?;
    let solver = cfg.solver.to_config()?;
    if !matches!(p.initial.as_str(), "sine_series" | "constant") {
        return Err(CliError::config(format!(
            "problem.initial must be sine_series or constant, got {:?}",
            p.initial
        )));
    }

    let mesh = build_mesh(&cfg.mesh)?;
    if mesh.dim() != 2 && p.initial == "sine_series" {
        return Err(CliError::config("the sine-series initial condition is two-dimensional"));
    }
    let nodes = dirichlet_nodes(&mesh, &p.dirichlet)?;
    let disc = Discretization::new(mesh, 1, false)?;
    let one = CoefficientField::Constant(1.0);
    let k = reduce_matrix(&disc.routing, &disc.diffusion_local(&one)?, true)?;
    let m = disc.mass_matrix(&one)?;
    let dofs: Vec<usize> = nodes.into_iter().collect();
    let vals = vec![p.dirichlet_value; dofs.len()];

    let u0 = match p.initial.as_str() {
        "constant" => vec![p.initial_value; disc.mesh.n_nodes()],
        _ => nodal_values(
            &disc.mesh,
            &multi_frequency_sine(p.sine_k, p.sine_r, sine_series_coefficients(p.sine_k, seed))?,
        )?,
    };
    let traj = match kind {
        Kind::Wave => {
            let integ = WaveIntegrator::new(&m, &k, dt, t.c, scheme, (&dofs, &vals), solver)?;
            integ.run(&u0, &vec![0.0; u0.len()], t.steps)?
        }
        Kind::AllenCahn => {
            let newton = NewtonConfig {
                tol: t.newton_tol,
                max_iter: t.newton_max_iter,
            };
            let ac = AllenCahn::new(&disc, &m, &k, dt, t.a, t.eps, newton, solver, (&dofs, &vals))?;
            ac.run(&u0, t.steps)?
        }
    };

    let mut rows = Vec::with_capacity(traj.states.len());
    let mut timing = Vec::with_capacity(traj.reports.len());
    for (step, time) in traj.times.iter().enumerate() {
        let (iters, rel, conv) = match step.checked_sub(1).map(|i| traj.reports[i]) {
            Some(r) => (r.iterations.to_string(), fmt_f(r.rel_residual), r.converged.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        rows.push(vec![
            step.to_string(),
            fmt_f(*time),
            fmt_f(traj.residual_norms[step]),
            iters,
            rel,
            conv,
        ]);
        if step > 0 {
            timing.push(vec![step.to_string(), fmt_f(traj.reports[step - 1].wall_time)]);
        }
    }
    write_csv(
        &out.join("trajectory.csv"),
        &[
            "step",
            "time",
            "residual_norm",
            "solve_iterations",
            "rel_residual",
            "converged",
        ],
        &rows,
    )?;
    write_csv(&out.join("trajectory_timing.csv"), &["step", "seconds"], &timing)?;
    if cfg.output.vtk && t.vtk_every > 0 {
        let last = traj.states.len() - 1;
        for (step, u) in traj.states.iter().enumerate() {
            if step % t.vtk_every == 0 || step == last {
                let title = format!("step {step} t={}", fmt_f(traj.times[step]));
                write_vtk(
                    out.join(format!("state_{step:05}.vtk")),
                    &disc.mesh,
                    &title,
                    &[VtkField::scalar("u", u)],
                    &[],
                )?;
            }
        }
    }
    let worst = traj.residual_norms.iter().fold(0.0f64, |a, &b| a.max(b));
    println!(
        "{} steps of {} with dt = {dt:e}; max residual norm {worst:.3e}",
        t.steps, p.kind
    );
    Ok(traj)
}
