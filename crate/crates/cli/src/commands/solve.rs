use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f, write_csv};
use crate::setup::{build_mesh, dirichlet_nodes};
use tg_core::batch::{lame_parameters, CoefficientField};
use tg_core::io::{write_vtk, VtkField};
use tg_core::physics::{checkerboard_source, nodal_values, Discretization, ProblemKind, ProblemSpec};
use tg_core::reduce::reduce_matrix;
use tg_core::solver::{condense, rel_error, rel_linear_residual, SolveReport};
use tg_core::FemError;

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub report: SolveReport,
    /// Residual recomputed from the returned solution.
    pub rel_residual: f64,
    /// Against the manufactured solution, when the source is `sine`.
    pub rel_error: Option<f64>,
}

fn sine_product(dim: usize) -> CoefficientField {
    CoefficientField::analytic(move |x| x[..dim].iter().map(|&xi| (PI * xi).sin()).product())
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> CliResult<SolveOutcome> {
    let p = &cfg.problem;
    let kind = ProblemKind::from_name(&p.kind)
        .filter(|k| matches!(k, ProblemKind::Poisson | ProblemKind::Elasticity))
        .ok_or_else(|| {
            CliError::config(format!(
                "solve needs problem.kind poisson or elasticity, got {:?}",
                p.kind
            ))
        })?;
    let solver = cfg.solver.to_config()?;
    let plane = p.plane_model()?;
    if kind == ProblemKind::Elasticity {
        lame_parameters(p.coefficient, p.poisson_ratio, 3, plane).map_err(|e| CliError::config(e.to_string()))?;
    } else if !(p.coefficient > 0.0 && p.coefficient.is_finite()) {
        return Err(CliError::config(format!(
            "problem.coefficient must be positive, got {}",
            p.coefficient
        )));
    }
    if !matches!(p.source.as_str(), "constant" | "sine" | "checkerboard") {
        return Err(CliError::config(format!(
            "problem.source must be constant, sine or checkerboard, got {:?}",
            p.source
        )));
    }
    if kind == ProblemKind::Elasticity && p.source != "constant" {
        return Err(CliError::config("elasticity takes a constant body force"));
    }

    let mut timing: Vec<(&str, f64)> = Vec::new();
    let t = Instant::now();
    let mesh = build_mesh(&cfg.mesh)?;
    timing.push(("mesh", t.elapsed().as_secs_f64()));
    let dim = mesh.dim();

    let coefficient = CoefficientField::Constant(p.coefficient);
    let source: Vec<CoefficientField> = match (kind, p.source.as_str()) {
        (ProblemKind::Elasticity, _) => match p.source_value.len() {
            1 => vec![CoefficientField::Constant(p.source_value[0]); dim],
            n if n == dim => p.source_value.iter().map(|&v| CoefficientField::Constant(v)).collect(),
            n => {
                return Err(CliError::config(format!(
                    "problem.source_value needs 1 or {dim} entries, got {n}"
                )))
            }
        },
        (_, "sine") => {
            let scale = p.coefficient * dim as f64 * PI * PI;
            vec![CoefficientField::analytic(move |x| {
                scale * x[..dim].iter().map(|&xi| (PI * xi).sin()).product::<f64>()
            })]
        }
        (_, "checkerboard") => vec![checkerboard_source(p.checkerboard_k)?],
        _ => match p.source_value.as_slice() {
            [v] => vec![CoefficientField::Constant(*v)],
            other => {
                return Err(CliError::config(format!(
                    "problem.source_value needs 1 entry, got {}",
                    other.len()
                )))
            }
        },
    };
    let mut problem = match kind {
        ProblemKind::Elasticity => ProblemSpec::elasticity(coefficient.clone(), p.poisson_ratio, source),
        _ => ProblemSpec::poisson(
            coefficient.clone(),
            source.into_iter().next().expect("one scalar source"),
        ),
    };
    problem.plane = plane;
    let nodes = dirichlet_nodes(&mesh, &p.dirichlet)?;
    problem = problem.with_dirichlet(nodes, None, p.dirichlet_value);
    problem.validate(dim)?;

    let t = Instant::now();
    let disc = Discretization::for_problem(mesh, &problem)?;
    timing.push(("routing_and_geometry", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let k_local = match kind {
        ProblemKind::Elasticity => disc.elasticity_local(&coefficient, p.poisson_ratio, plane)?,
        _ => disc.diffusion_local(&coefficient)?,
    };
    timing.push(("stage1_stiffness", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let k = reduce_matrix(&disc.routing, &k_local, true)?;
    timing.push(("stage2_stiffness", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let f = disc.load(&problem.source)?;
    timing.push(("load", t.elapsed().as_secs_f64()));

    let (dofs, vals) = problem.dirichlet_dofs(&disc.dofmap);
    let sys = condense(&k, &f, &dofs, &vals)?;
    let t = Instant::now();
    let (u, report) = sys.solve(&solver, None)?;
    timing.push(("solve", t.elapsed().as_secs_f64()));
    let rel_residual = rel_linear_residual(&sys.k_ff, &sys.restrict(&u), &sys.f_f)?;
    let err = if kind == ProblemKind::Poisson && p.source == "sine" {
        Some(rel_error(&u, &nodal_values(&disc.mesh, &sine_product(dim))?)?)
    } else {
        None
    };

    write_csv(
        &out.join("solve_report.csv"),
        &[
            "problem",
            "element",
            "nodes",
            "elements",
            "dofs",
            "free_dofs",
            "nnz",
            "iterations",
            "rel_residual",
            "converged",
            "rel_error",
        ],
        &[vec![
            p.kind.clone(),
            disc.mesh.kind().name().to_string(),
            disc.mesh.n_nodes().to_string(),
            disc.mesh.n_elements().to_string(),
            disc.dofmap.n_dofs().to_string(),
            sys.n_free().to_string(),
            k.nnz().to_string(),
            report.iterations.to_string(),
            fmt_f(rel_residual),
            report.converged.to_string(),
            err.map(fmt_f).unwrap_or_default(),
        ]],
    )?;
    let rows: Vec<Vec<String>> = timing.iter().map(|(s, t)| vec![s.to_string(), fmt_f(*t)]).collect();
    write_csv(&out.join("solve_timing.csv"), &["stage", "seconds"], &rows)?;
    if cfg.output.vtk {
        let field = if kind == ProblemKind::Elasticity {
            VtkField::vector("displacement", dim, &u)
        } else {
            VtkField::scalar("u", &u)
        };
        write_vtk(out.join("solution.vtk"), &disc.mesh, "solution", &[field], &[])?;
    }

    println!("RelRes = {rel_residual:.3e} after {} iterations", report.iterations);
    if let Some(e) = err {
        println!("RelErr = {e:.3e}");
    }
    if !report.converged {
        return Err(FemError::NotConverged {
            context: "steady solve".into(),
            iterations: report.iterations,
            rel_residual: report.rel_residual,
        }
        .into());
    }
    Ok(SolveOutcome {
        report,
        rel_residual,
        rel_error: err,
    })
}
