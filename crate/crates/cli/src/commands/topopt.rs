use std::path::Path;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::{fmt_f, write_csv};
use tg_core::io::{write_vtk, VtkField};
use tg_core::topopt::{TopoptProblem, TopoptResult};

pub fn cmd_topopt(cfg: &RunConfig, out: &Path) -> CliResult<TopoptResult> {
    let t = &cfg.topopt;
    let params = t.params()?;
    let sensitivity = t.sensitivity_method()?;
    let solver = cfg.solver.to_config()?;

    let mut problem = TopoptProblem::cantilever_sized(t.nx, t.ny, params)?;
    problem.solver = solver;
    problem.sensitivity = sensitivity;
    problem.snapshots = t.snapshots.clone();
    let result = problem.run()?;

    let rows: Vec<Vec<String>> = result
        .history
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f(r.compliance),
                fmt_f(r.volume_fraction),
                r.solve_iterations.to_string(),
                fmt_f(r.rel_residual),
                fmt_f(r.change),
                r.infeasible.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("history.csv"),
        &[
            "iteration",
            "compliance",
            "volume_fraction",
            "solve_iterations",
            "rel_residual",
            "change",
            "infeasible",
        ],
        &rows,
    )?;
    let timing: Vec<Vec<String>> = result
        .history
        .iter()
        .map(|r| vec![r.iteration.to_string(), fmt_f(r.wall_time)])
        .collect();
    write_csv(&out.join("history_timing.csv"), &["iteration", "seconds"], &timing)?;
    if cfg.output.vtk {
        let mesh = &problem.disc.mesh;
        for (it, rho) in &result.snapshots {
            let title = format!("density at iteration {it}");
            write_vtk(
                out.join(format!("density_{it:03}.vtk")),
                mesh,
                &title,
                &[],
                &[VtkField::scalar("density", rho)],
            )?;
        }
        write_vtk(
            out.join("density_final.vtk"),
            mesh,
            "final density",
            &[],
            &[VtkField::scalar("density", &result.density)],
        )?;
    }

    let first = &result.history[0];
    let last = result.history.last().expect("iteration 0 is always recorded");
    println!(
        "compliance {:.4e} -> {:.4e} ({:.2}% reduction) over {} iterations, volume fraction {:.4}",
        first.compliance,
        last.compliance,
        100.0 * result.compliance_reduction(),
        last.iteration,
        last.volume_fraction
    );
    Ok(result)
}
