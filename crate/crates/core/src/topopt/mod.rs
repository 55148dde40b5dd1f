//! Adjoint sensitivities through the assembled system and SIMP compliance
//! minimization with a sensitivity filter and MMA updates.

mod filter;
mod mma;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::batch::{CoefficientField, LocalMatrices, PlaneModel};
use crate::error::{FemError, Result};
use crate::linalg::dot;
use crate::mesh::{generate_grid, select_boundary, ElementKind, Mesh, DEFAULT_SELECT_TOL};
use crate::physics::Discretization;
use crate::reduce::{pull_back_matrix, reduce_matrix, CsrPattern, RoutingMatrices, SparseOperator};
use crate::solver::{condense, solve, CondensedSystem, SolveReport, SolverConfig};

pub use filter::SensitivityFilter;
pub use mma::{Mma, MmaParams, MmaStep};

/// Solves `Kᵀ λ = −∂Γ/∂U`, reusing `K` when it is flagged symmetric.
pub fn adjoint_solve(k: &SparseOperator, dgamma_du: &[f64], config: &SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
    let rhs: Vec<f64> = dgamma_du.iter().map(|v| -v).collect();
    let transposed;
    let op = if k.symmetric {
        k
    } else {
        transposed = k.transpose();
        &transposed
    };
    let (lambda, report) = solve(op, &rhs, None, config)?;
    if !report.converged {
        return Err(FemError::NotConverged {
            context: "adjoint solve".into(),
            iterations: report.iterations,
            rel_residual: report.rel_residual,
        });
    }
    Ok((lambda, report))
}

/// Pattern-restricted gradients: `(∂Γ/∂K)_ij = λ_i U_j` at stored `(i, j)`
/// only, and `∂Γ/∂F = −λ`.
pub fn gradient_products(pattern: &CsrPattern, lambda: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dk = Vec::with_capacity(pattern.nnz());
    for i in 0..pattern.n_rows {
        for &j in pattern.row(i) {
            dk.push(lambda[i] * u[j]);
        }
    }
    assert_eq!(dk.len(), pattern.nnz(), "gradient must live on the sparsity pattern");
    let df = lambda.iter().map(|v| -v).collect();
    (dk, df)
}

/// Chain rule through Stage II and a Stage I kernel that is linear in a
/// per-element parameter θ_e: `dΓ/dθ_e = Σ_ab (𝒮_matᵀ ∂Γ/∂K)[e,a,b] · ∂K_local[e,a,b]/∂θ_e`.
pub fn element_parameter_gradient(
    routing: &RoutingMatrices,
    dgamma_dk: &[f64],
    dk_local: &LocalMatrices,
) -> Result<Vec<f64>> {
    let pulled = pull_back_matrix(routing, dgamma_dk)?;
    let s = dk_local.k * dk_local.k;
    Ok(pulled
        .data
        .par_chunks(s.max(1))
        .zip(dk_local.data.par_chunks(s.max(1)))
        .map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpParams {
    pub penal: f64,
    pub e_max: f64,
    pub e_min: f64,
    pub poisson_ratio: f64,
    pub volume_fraction: f64,
    /// Filter radius in element sizes.
    pub r_min_factor: f64,
    pub move_limit: f64,
    pub iterations: usize,
    pub rho_min: f64,
    pub plane: PlaneModel,
}

impl Default for SimpParams {
    fn default() -> Self {
        SimpParams {
            penal: 3.0,
            e_max: 70_000.0,
            e_min: 70.0,
            poisson_ratio: 0.3,
            volume_fraction: 0.5,
            r_min_factor: 1.5,
            move_limit: 0.1,
            iterations: 51,
            rho_min: 1e-3,
            plane: PlaneModel::PlaneStrain,
        }
    }
}

impl SimpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FemError::InvalidParameter(m.to_string()));
        if !(self.penal >= 1.0) {
            return bad("SIMP penalization must be >= 1");
        }
        if !(self.e_min > 0.0 && self.e_max > self.e_min) {
            return bad("SIMP moduli must satisfy 0 < e_min < e_max");
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return bad("volume fraction must lie in (0, 1]");
        }
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return bad("rho_min must lie in (0, 1)");
        }
        if !(self.r_min_factor > 0.0) || !(self.move_limit >= 0.0) {
            return bad("filter radius must be positive and move limit non-negative");
        }
        crate::batch::lame_parameters(1.0, self.poisson_ratio, 2, self.plane)?;
        Ok(())
    }
}

/// `E(ρ) = E_min + ρᵖ (E_max − E_min)`.
pub fn simp_young(rho: &[f64], params: &SimpParams) -> Vec<f64> {
    rho.iter()
        .map(|r| params.e_min + r.powf(params.penal) * (params.e_max - params.e_min))
        .collect()
}

/// `dE/dρ = p ρ^{p−1} (E_max − E_min)`.
pub fn simp_young_derivative(rho: &[f64], params: &SimpParams) -> Vec<f64> {
    rho.iter()
        .map(|r| params.penal * r.powf(params.penal - 1.0) * (params.e_max - params.e_min))
        .collect()
}

/// `C = Fᵀ U`.
pub fn compliance(f: &[f64], u: &[f64]) -> f64 {
    dot(f, u)
}

/// Closed form `∂C/∂ρ_e = −p ρ_e^{p−1} (E_max − E_min) u_eᵀ K₀ᵉ u_e`.
pub fn simp_sensitivity(
    rho: &[f64],
    u: &[f64],
    k0: &LocalMatrices,
    element_dofs: &[usize],
    params: &SimpParams,
) -> Vec<f64> {
    let energies = k0.element_energies(element_dofs, u);
    simp_young_derivative(rho, params)
        .iter()
        .zip(energies)
        .map(|(de, w)| -de * w)
        .collect()
}

/// `Σ ρ_e v_e / Σ v_e`.
pub fn volume_fraction(rho: &[f64], volumes: &[f64]) -> f64 {
    let total: f64 = volumes.iter().sum();
    rho.iter().zip(volumes).map(|(r, v)| r * v).sum::<f64>() / total
}

/// Consistent nodal forces of a constant traction on a straight boundary
/// segment: each edge of length `ℓ` between selected nodes contributes
/// `tℓ/2` to both end nodes. `nodes` are ordered along `axis`.
pub fn traction_nodal_forces(
    mesh: &Mesh,
    nodes: &[usize],
    axis: usize,
    traction: &[f64],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let d = mesh.dim();
    if traction.len() != d {
        return Err(FemError::InvalidParameter(format!("traction needs {d} components")));
    }
    let mut sorted = nodes.to_vec();
    sorted.sort_by(|&a, &b| mesh.node(a)[axis].total_cmp(&mesh.node(b)[axis]));
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for w in sorted.windows(2) {
        let len = (mesh.node(w[1])[axis] - mesh.node(w[0])[axis]).abs();
        for &n in w {
            let f = out.entry(n).or_insert_with(|| vec![0.0; d]);
            for c in 0..d {
                f[c] += 0.5 * len * traction[c];
            }
        }
    }
    Ok(out)
}

/// Which gradient path drives the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensitivityMethod {
    /// Adjoint solve plus pattern products and the Stage I/II chain rule.
    #[default]
    Adjoint,
    /// The SIMP closed form.
    ClosedForm,
}

/// A compliance problem on a fixed mesh with nodal loads and clamped DoFs.
#[derive(Debug, Clone)]
pub struct TopoptProblem {
    pub disc: Discretization,
    pub load: Vec<f64>,
    pub dirichlet: Vec<usize>,
    pub params: SimpParams,
    pub solver: SolverConfig,
    pub mma: MmaParams,
    pub sensitivity: SensitivityMethod,
    /// Iterations whose densities are kept.
    pub snapshots: Vec<usize>,
    /// Absolute filter radius.
    pub r_min: f64,
    /// Unit-modulus element stiffness `K₀ᵉ`.
    pub k0: LocalMatrices,
}

impl TopoptProblem {
    pub fn new(mesh: Mesh, load: Vec<f64>, dirichlet: Vec<usize>, params: SimpParams) -> Result<Self> {
        params.validate()?;
        let h = element_size(&mesh);
        let disc = Discretization::new(mesh, 2, false)?;
        if load.len() != disc.dofmap.n_dofs() {
            return Err(FemError::Shape {
                context: "topology optimization load".into(),
                expected: format!("{}", disc.dofmap.n_dofs()),
                actual: format!("{}", load.len()),
            });
        }
        let k0 = disc.elasticity_local(&CoefficientField::Constant(1.0), params.poisson_ratio, params.plane)?;
        let mut mma = MmaParams::default();
        mma.move_limit = params.move_limit;
        Ok(TopoptProblem {
            disc,
            load,
            dirichlet,
            params,
            solver: SolverConfig::default(),
            mma,
            sensitivity: SensitivityMethod::default(),
            snapshots: vec![0, 5, 10, 15, 20, 25, 30, 50],
            r_min: params.r_min_factor * h,
            k0,
        })
    }

    /// The 60 × 30 QUAD4 cantilever: clamped at x = 0, traction (0, −100) on
    /// x = 60, 0 ≤ y ≤ 3.
    pub fn cantilever(params: SimpParams) -> Result<Self> {
        Self::cantilever_sized(60, 30, params)
    }

    /// Cantilever on an `nx × ny` grid of unit squares with the load segment
    /// covering the bottom tenth of the right edge, rounded up to whole
    /// elements so coarse grids still carry a load.
    pub fn cantilever_sized(nx: usize, ny: usize, params: SimpParams) -> Result<Self> {
        let (lx, ly) = (nx as f64, ny as f64);
        let segment = (0.1 * ly).ceil().max(1.0);
        let mesh = generate_grid(ElementKind::Quad4, &[lx, ly], &[nx, ny])?;
        let left: Vec<usize> = select_boundary(&mesh, DEFAULT_SELECT_TOL, |x, tol| x[0].abs() <= tol)
            .into_iter()
            .collect();
        let loaded: Vec<usize> = select_boundary(&mesh, DEFAULT_SELECT_TOL, |x, tol| {
            (x[0] - lx).abs() <= tol && x[1] >= -tol && x[1] <= segment + tol
        })
        .into_iter()
        .collect();
        let forces = traction_nodal_forces(&mesh, &loaded, 1, &[0.0, -100.0])?;
        let mut load = vec![0.0; mesh.n_nodes() * 2];
        for (n, f) in forces {
            load[2 * n] += f[0];
            load[2 * n + 1] += f[1];
        }
        let dirichlet = left.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
        Self::new(mesh, load, dirichlet, params)
    }

    pub fn n_elements(&self) -> usize {
        self.disc.mesh.n_elements()
    }

    /// Assembles `K(ρ)` through the Stage I elasticity kernel with a
    /// per-element Young's modulus.
    pub fn stiffness(&self, rho: &[f64]) -> Result<SparseOperator> {
        let young = CoefficientField::PerElement(simp_young(rho, &self.params));
        let local = self
            .disc
            .elasticity_local(&young, self.params.poisson_ratio, self.params.plane)?;
        reduce_matrix(&self.disc.routing, &local, true)
    }

    /// Forward solve; returns the condensed system, full displacement and report.
    pub fn solve_state(&self, rho: &[f64], x0: Option<&[f64]>) -> Result<(CondensedSystem, Vec<f64>, SolveReport)> {
        let k = self.stiffness(rho)?;
        let zeros = vec![0.0; self.dirichlet.len()];
        let sys = condense(&k, &self.load, &self.dirichlet, &zeros)?;
        let (u, report) = sys.solve(&self.solver, x0)?;
        if !report.converged {
            return Err(FemError::NotConverged {
                context: "topology optimization forward solve".into(),
                iterations: report.iterations,
                rel_residual: report.rel_residual,
            });
        }
        Ok((sys, u, report))
    }

    /// Compliance gradient by the closed form.
    pub fn closed_form_gradient(&self, rho: &[f64], u: &[f64]) -> Vec<f64> {
        simp_sensitivity(rho, u, &self.k0, self.disc.dofmap.all_element_dofs(), &self.params)
    }

    /// Compliance gradient by the generic adjoint path: `Kᵀλ = −∂C/∂U = −F`,
    /// pattern products `λUᵀ`, pull-back to local slots, and contraction
    /// with `∂K_local/∂ρ_e = E'(ρ_e) K₀ᵉ`.
    pub fn adjoint_gradient(&self, rho: &[f64], sys: &CondensedSystem, u: &[f64]) -> Result<Vec<f64>> {
        let (lambda_f, _) = adjoint_solve(&sys.k_ff, &sys.restrict(&self.load), &self.solver)?;
        let lambda = sys.expand_homogeneous(&lambda_f);
        let (dk, _df) = gradient_products(&self.disc.routing.pattern, &lambda, u);
        let dk_local = self.k0.scaled_per_element(&simp_young_derivative(rho, &self.params))?;
        element_parameter_gradient(&self.disc.routing, &dk, &dk_local)
    }

    pub fn run(&self) -> Result<TopoptResult> {
        let ne = self.n_elements();
        let p = &self.params;
        let volumes = self.disc.element_volumes();
        let total_volume: f64 = volumes.iter().sum();
        let dvol: Vec<f64> = volumes.iter().map(|v| v / total_volume).collect();
        let filter = SensitivityFilter::new(&self.disc.mesh.centroids(), self.disc.mesh.dim(), self.r_min)?;
        let mut mma = Mma::new(vec![p.rho_min; ne], vec![1.0; ne], self.mma)?;
        let mut rho = vec![p.volume_fraction.max(p.rho_min); ne];
        let mut history = Vec::with_capacity(p.iterations + 1);
        let mut snapshots = BTreeMap::new();
        let mut x0: Option<Vec<f64>> = None;
        let mut c0 = None;
        for it in 0..=p.iterations {
            let t0 = Instant::now();
            let (sys, u, report) = self.solve_state(&rho, x0.as_deref()).map_err(|e| match e {
                FemError::NotConverged {
                    context,
                    iterations,
                    rel_residual,
                } => FemError::NotConverged {
                    context: format!("{context} at iteration {it}"),
                    iterations,
                    rel_residual,
                },
                other => other,
            })?;
            x0 = Some(sys.restrict(&u));
            let c = compliance(&self.load, &u);
            let scale = *c0.get_or_insert(c);
            let vf = volume_fraction(&rho, &volumes);
            if self.snapshots.contains(&it) {
                snapshots.insert(it, rho.clone());
            }
            let mut change = 0.0;
            let mut infeasible = false;
            if it < p.iterations {
                let dc = match self.sensitivity {
                    SensitivityMethod::Adjoint => self.adjoint_gradient(&rho, &sys, &u)?,
                    SensitivityMethod::ClosedForm => self.closed_form_gradient(&rho, &u),
                };
                let filtered = filter.apply(&dc, &rho);
                let df0: Vec<f64> = filtered.iter().map(|v| v / scale).collect();
                let step = mma.update(&rho, &df0, vf - p.volume_fraction, &dvol)?;
                change = rho.iter().zip(&step.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                infeasible = step.infeasible;
                rho = step.x;
            }
            history.push(IterationRecord {
                iteration: it,
                compliance: c,
                volume_fraction: vf,
                solve_iterations: report.iterations,
                rel_residual: report.rel_residual,
                change,
                infeasible,
                wall_time: t0.elapsed().as_secs_f64(),
            });
        }
        Ok(TopoptResult {
            density: rho,
            history,
            snapshots,
        })
    }
}

/// Mean element edge length estimate: `(volume / E)^{1/d}`.
pub fn element_size(mesh: &Mesh) -> f64 {
    let (lo, hi) = mesh.bounding_box();
    let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    (vol / mesh.n_elements().max(1) as f64).powf(1.0 / mesh.dim() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub compliance: f64,
    pub volume_fraction: f64,
    pub solve_iterations: usize,
    pub rel_residual: f64,
    /// Largest density change of the update that followed this evaluation.
    pub change: f64,
    pub infeasible: bool,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TopoptResult {
    /// Densities after the last evaluation.
    pub density: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub snapshots: BTreeMap<usize, Vec<f64>>,
}

impl TopoptResult {
    /// `1 − C_last / C_0`.
    pub fn compliance_reduction(&self) -> f64 {
        let first = self.history.first().map_or(f64::NAN, |r| r.compliance);
        let last = self.history.last().map_or(f64::NAN, |r| r.compliance);
        1.0 - last / first
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simp_young_values() {
        let p = SimpParams::default();
        let e = simp_young(&[1.0, 0.0, 0.5], &p);
        assert_eq!(e[0], 70_000.0);
        assert_eq!(e[1], 70.0);
        assert!((e[2] - 8811.25).abs() < 1e-9);
    }

    #[test]
    fn one_dof_compliance() {
        assert_eq!(compliance(&[4.0], &[2.0]), 8.0);
        assert_eq!(compliance(&[4.0, 1.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn outer_product_on_dense_pattern() {
        let k = SparseOperator::from_dense(2, 2, &[1.0, 2.0, 3.0, 4.0], false);
        let (dk, df) = gradient_products(&k.pattern, &[1.0, -2.0], &[3.0, 5.0]);
        assert_eq!(dk, vec![3.0, 5.0, -6.0, -10.0]);
        assert_eq!(df, vec![-1.0, 2.0]);
    }

    #[test]
    fn cantilever_traction_forces() {
        let mesh = generate_grid(ElementKind::Quad4, &[60.0, 30.0], &[60, 30]).unwrap();
        let nodes: Vec<usize> = select_boundary(&mesh, DEFAULT_SELECT_TOL, |x, tol| {
            (x[0] - 60.0).abs() <= tol && x[1] <= 3.0 + tol
        })
        .into_iter()
        .collect();
        let f = traction_nodal_forces(&mesh, &nodes, 1, &[0.0, -100.0]).unwrap();
        let ys: Vec<f64> = f.values().map(|v| v[1]).collect();
        assert_eq!(ys, vec![-50.0, -100.0, -100.0, -50.0]);
    }

    #[test]
    fn volume_fraction_weighted() {
        assert_eq!(volume_fraction(&[0.5; 3], &[1.0, 2.0, 3.0]), 0.5);
        assert!((volume_fraction(&[1.0, 0.0], &[1.0, 3.0]) - 0.25).abs() < 1e-15);
    }
}
