//! Problem definitions bound to the two-stage assembly, discrete residuals,
//! source fields and time steppers.

mod allen_cahn;
mod wave;

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::{
    batch_geometry, local_load, local_mass, local_stiffness_diffusion, local_stiffness_elasticity, push_forward,
    CoefficientField, GeometryBatch, LameValues, LocalMatrices, PhysicalGradients, PlaneModel, QuadratureValues,
};
use crate::error::{FemError, Result};
use crate::linalg::{dot, sub};
use crate::mesh::{reference_tables, DofMap, Mesh, ReferenceTables};
use crate::reduce::{build_routing, reduce_matrix, reduce_vector, RoutingMatrices, SparseOperator};
use crate::solver::SolveReport;

pub use allen_cahn::{allen_cahn_residual, allen_cahn_step, AllenCahn, NewtonConfig, NewtonReport};
pub use wave::{wave_energy, wave_residual, wave_start, wave_step, WaveIntegrator, WaveScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Poisson,
    Elasticity,
    Mass,
    AllenCahn,
}

impl ProblemKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "poisson" | "diffusion" => Some(ProblemKind::Poisson),
            "elasticity" => Some(ProblemKind::Elasticity),
            "mass" => Some(ProblemKind::Mass),
            "allen_cahn" | "allen-cahn" | "ac" => Some(ProblemKind::AllenCahn),
            _ => None,
        }
    }

    /// Unknowns per node.
    pub fn components(self, dim: usize) -> usize {
        if self == ProblemKind::Elasticity {
            dim
        } else {
            1
        }
    }
}

/// Dirichlet data on a node set; `component: None` constrains every component.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletCondition {
    pub nodes: BTreeSet<usize>,
    pub component: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeParams {
    pub dt: f64,
    pub steps: usize,
    /// Wave speed.
    pub c: f64,
    /// Allen–Cahn diffusion scale.
    pub a: f64,
    /// Allen–Cahn reaction scale.
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// ρ for diffusion, Young's modulus for elasticity, density for mass.
    pub coefficient: CoefficientField,
    pub poisson_ratio: f64,
    pub plane: PlaneModel,
    /// One scalar source or one field per displacement component.
    pub source: Vec<CoefficientField>,
    pub dirichlet: Vec<DirichletCondition>,
    pub time: Option<TimeParams>,
}

impl ProblemSpec {
    pub fn poisson(coefficient: CoefficientField, source: CoefficientField) -> Self {
        ProblemSpec {
            kind: ProblemKind::Poisson,
            coefficient,
            poisson_ratio: 0.0,
            plane: PlaneModel::default(),
            source: vec![source],
            dirichlet: Vec::new(),
            time: None,
        }
    }

    pub fn elasticity(young: CoefficientField, poisson_ratio: f64, body_force: Vec<CoefficientField>) -> Self {
        ProblemSpec {
            kind: ProblemKind::Elasticity,
            coefficient: young,
            poisson_ratio,
            plane: PlaneModel::default(),
            source: body_force,
            dirichlet: Vec::new(),
            time: None,
        }
    }

    pub fn with_dirichlet(mut self, nodes: BTreeSet<usize>, component: Option<usize>, value: f64) -> Self {
        self.dirichlet.push(DirichletCondition {
            nodes,
            component,
            value,
        });
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let nc = self.kind.components(dim);
        if self.kind == ProblemKind::Elasticity {
            if self.source.len() != dim && !self.source.is_empty() {
                return Err(FemError::InvalidParameter(format!(
                    "elasticity body force needs {dim} components, got {}",
                    self.source.len()
                )));
            }
            crate::batch::lame_parameters(1.0, self.poisson_ratio, dim, self.plane)?;
        } else if self.source.len() > 1 {
            return Err(FemError::InvalidParameter(
                "scalar problems take one source field".into(),
            ));
        }
        for d in &self.dirichlet {
            if let Some(c) = d.component {
                if c >= nc {
                    return Err(FemError::InvalidParameter(format!(
                        "Dirichlet component {c} out of range for {nc} components"
                    )));
                }
            }
            if !d.value.is_finite() {
                return Err(FemError::InvalidParameter("Dirichlet value is not finite".into()));
            }
        }
        if let Some(t) = &self.time {
            if !(t.dt > 0.0 && t.dt.is_finite()) {
                return Err(FemError::InvalidParameter(format!(
                    "time step must be positive, got {}",
                    t.dt
                )));
            }
        }
        Ok(())
    }

    /// Constrained DoFs (ascending) and their values; later conditions win on overlap.
    pub fn dirichlet_dofs(&self, dofmap: &DofMap) -> (Vec<usize>, Vec<f64>) {
        let mut map = BTreeMap::new();
        for d in &self.dirichlet {
            for &n in &d.nodes {
                match d.component {
                    Some(c) => {
                        map.insert(dofmap.dof(n, c), d.value);
                    }
                    None => {
                        for c in 0..dofmap.components() {
                            map.insert(dofmap.dof(n, c), d.value);
                        }
                    }
                }
            }
        }
        map.into_iter().unzip()
    }
}

/// Geometry and basis data for one quadrature rule.
#[derive(Debug, Clone)]
pub struct StageData {
    pub tables: ReferenceTables,
    pub geom: GeometryBatch,
    pub grads: PhysicalGradients,
}

impl StageData {
    pub fn new(mesh: &Mesh, degree: usize) -> Result<Self> {
        let tables = reference_tables(mesh.kind(), degree)?;
        let geom = batch_geometry(mesh, &tables)?;
        let grads = push_forward(&geom, &tables);
        Ok(StageData { tables, geom, grads })
    }
}

/// Everything that depends only on the mesh and DoF layout, computed once.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub routing: RoutingMatrices,
    /// Rule for stiffness terms.
    pub stiffness: StageData,
    /// Rule for mass, load and reaction terms.
    pub mass: StageData,
}

impl Discretization {
    /// Uses the default degrees; `variable_coefficients` raises the stiffness
    /// rule to the mass degree.
    pub fn new(mesh: Mesh, components: usize, variable_coefficients: bool) -> Result<Self> {
        let kind = mesh.kind();
        let ks = if variable_coefficients {
            kind.default_stiffness_degree().max(kind.default_mass_degree())
        } else {
            kind.default_stiffness_degree()
        };
        Self::with_degrees(mesh, components, ks, kind.default_mass_degree())
    }

    pub fn with_degrees(mesh: Mesh, components: usize, stiffness_degree: usize, mass_degree: usize) -> Result<Self> {
        let dofmap = DofMap::new(&mesh, components)?;
        let routing = build_routing(&mesh, &dofmap)?;
        let stiffness = StageData::new(&mesh, stiffness_degree)?;
        let mass = if mass_degree == stiffness_degree {
            stiffness.clone()
        } else {
            StageData::new(&mesh, mass_degree)?
        };
        Ok(Discretization {
            mesh,
            dofmap,
            routing,
            stiffness,
            mass,
        })
    }

    /// Discretization suited to `problem` (components and quadrature).
    pub fn for_problem(mesh: Mesh, problem: &ProblemSpec) -> Result<Self> {
        let nc = problem.kind.components(mesh.dim());
        Self::new(mesh, nc, !problem.coefficient.is_constant())
    }

    pub fn evaluate(&self, field: &CoefficientField, stage: &StageData) -> Result<QuadratureValues> {
        field.evaluate(&self.mesh, &stage.geom, &stage.tables)
    }

    pub fn diffusion_local(&self, rho: &CoefficientField) -> Result<LocalMatrices> {
        let c = self.evaluate(rho, &self.stiffness)?;
        local_stiffness_diffusion(&self.stiffness.geom, &self.stiffness.grads, &c, &self.stiffness.tables)
    }

    pub fn elasticity_local(
        &self,
        young: &CoefficientField,
        poisson_ratio: f64,
        plane: PlaneModel,
    ) -> Result<LocalMatrices> {
        let e = self.evaluate(young, &self.stiffness)?;
        let lame = LameValues::from_young(&e, poisson_ratio, self.mesh.dim(), plane)?;
        local_stiffness_elasticity(
            &self.stiffness.geom,
            &self.stiffness.grads,
            &lame,
            &self.stiffness.tables,
        )
    }

    pub fn mass_local(&self, density: &CoefficientField) -> Result<LocalMatrices> {
        let c = self.evaluate(density, &self.mass)?;
        local_mass(&self.mass.geom, &self.mass.tables, &c)
    }

    /// Global load vector for scalar or per-component sources.
    pub fn load(&self, sources: &[CoefficientField]) -> Result<Vec<f64>> {
        if sources.is_empty() {
            return Ok(vec![0.0; self.dofmap.n_dofs()]);
        }
        let vals = sources
            .iter()
            .map(|s| self.evaluate(s, &self.mass))
            .collect::<Result<Vec<_>>>()?;
        let local = local_load(&self.mass.geom, &self.mass.tables, &vals)?;
        reduce_vector(&self.routing, &local)
    }

    pub fn mass_matrix(&self, density: &CoefficientField) -> Result<SparseOperator> {
        reduce_matrix(&self.routing, &self.mass_local(density)?, true)
    }

    pub fn element_volumes(&self) -> Vec<f64> {
        self.mass.geom.element_measures(&self.mass.tables)
    }
}

/// Global operators before condensation.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub k: SparseOperator,
    pub f: Vec<f64>,
    pub m: Option<SparseOperator>,
}

/// Builds K, F (and M for time-dependent or mass problems) through Stage I
/// kernels and Stage II reduction.
pub fn assemble(problem: &ProblemSpec, disc: &Discretization) -> Result<Assembled> {
    problem.validate(disc.mesh.dim())?;
    let expected = problem.kind.components(disc.mesh.dim());
    if disc.dofmap.components() != expected {
        return Err(FemError::InvalidParameter(format!(
            "problem needs {expected} components per node, discretization has {}",
            disc.dofmap.components()
        )));
    }
    let one = CoefficientField::Constant(1.0);
    let k_local = match problem.kind {
        ProblemKind::Poisson => disc.diffusion_local(&problem.coefficient)?,
        ProblemKind::Elasticity => disc.elasticity_local(&problem.coefficient, problem.poisson_ratio, problem.plane)?,
        ProblemKind::Mass => disc.mass_local(&problem.coefficient)?,
        ProblemKind::AllenCahn => disc.diffusion_local(&one)?,
    };
    let k = reduce_matrix(&disc.routing, &k_local, true)?;
    let f = disc.load(&problem.source)?;
    let m = match problem.kind {
        ProblemKind::Mass => Some(k.clone()),
        ProblemKind::AllenCahn => Some(disc.mass_matrix(&one)?),
        _ if problem.time.is_some() => Some(disc.mass_matrix(&one)?),
        _ => None,
    };
    Ok(Assembled { k, f, m })
}

/// `‖KU − F‖₂²`, or `rᵀ W r` with `r = KU − F` when a weight is given.
pub fn residual_loss(k: &SparseOperator, u: &[f64], f: &[f64], weight: Option<&SparseOperator>) -> Result<f64> {
    if u.len() != k.n_cols() || f.len() != k.n_rows() {
        return Err(FemError::Shape {
            context: "residual loss".into(),
            expected: format!("U: {}, F: {}", k.n_cols(), k.n_rows()),
            actual: format!("U: {}, F: {}", u.len(), f.len()),
        });
    }
    let r = sub(&k.matvec(u), f);
    match weight {
        None => Ok(dot(&r, &r)),
        Some(w) => {
            if w.n_rows() != r.len() || w.n_cols() != r.len() {
                return Err(FemError::Shape {
                    context: "residual weight".into(),
                    expected: format!("{0}×{0}", r.len()),
                    actual: format!("{}×{}", w.n_rows(), w.n_cols()),
                });
            }
            Ok(dot(&r, &w.matvec(&r)))
        }
    }
}

/// `M U̇ + K U + F_nonlin − F_ext`.
pub fn semidiscrete_residual(
    m: &SparseOperator,
    k: &SparseOperator,
    u_dot: &[f64],
    u: &[f64],
    f_nonlin: &[f64],
    f_ext: &[f64],
) -> Result<Vec<f64>> {
    let n = m.n_rows();
    for (name, len) in [
        ("U̇", u_dot.len()),
        ("U", u.len()),
        ("F_nonlin", f_nonlin.len()),
        ("F_ext", f_ext.len()),
    ] {
        if len != n {
            return Err(FemError::Shape {
                context: format!("semi-discrete residual {name}"),
                expected: format!("{n}"),
                actual: format!("{len}"),
            });
        }
    }
    let mu = m.matvec(u_dot);
    let ku = k.matvec(u);
    Ok((0..n).map(|i| mu[i] + ku[i] + f_nonlin[i] - f_ext[i]).collect())
}

/// `(−1)^{⌊Kx⌋ + ⌊Ky⌋}`.
pub fn checkerboard_source(frequency: u32) -> Result<CoefficientField> {
    if frequency == 0 {
        return Err(FemError::InvalidParameter("checkerboard frequency must be >= 1".into()));
    }
    let k = frequency as f64;
    Ok(CoefficientField::analytic(move |x| {
        let s = (k * x[0]).floor() as i64 + (k * x[1]).floor() as i64;
        if s.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// Coefficients `a_ij ~ U[−1, 1]` of the multi-frequency sine field, row-major K×K.
pub fn sine_series_coefficients(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k * k).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// `u₀(x,y) = π/K² Σ_{i,j=1..K} a_ij (i² + j²)^{−r} sin(πix) sin(πjy)`.
pub fn multi_frequency_sine(k: usize, r: f64, coefficients: Vec<f64>) -> Result<CoefficientField> {
    if k == 0 || coefficients.len() != k * k {
        return Err(FemError::InvalidParameter(format!(
            "sine series needs K >= 1 and K² = {} coefficients, got {}",
            k * k,
            coefficients.len()
        )));
    }
    let scale = std::f64::consts::PI / (k * k) as f64;
    let weights: Vec<f64> = (0..k * k)
        .map(|n| {
            let (i, j) = ((n / k + 1) as f64, (n % k + 1) as f64);
            coefficients[n] * (i * i + j * j).powf(-r)
        })
        .collect();
    Ok(CoefficientField::analytic(move |x| {
        let pi = std::f64::consts::PI;
        let mut s = 0.0;
        for i in 0..k {
            let si = (pi * (i + 1) as f64 * x[0]).sin();
            for j in 0..k {
                s += weights[i * k + j] * si * (pi * (j + 1) as f64 * x[1]).sin();
            }
        }
        scale * s
    }))
}

/// Samples an analytic field at the mesh nodes.
pub fn nodal_values(mesh: &Mesh, field: &CoefficientField) -> Result<Vec<f64>> {
    match field {
        CoefficientField::Constant(c) => Ok(vec![*c; mesh.n_nodes()]),
        CoefficientField::Nodal(v) if v.len() == mesh.n_nodes() => Ok(v.clone()),
        CoefficientField::Analytic(f) => Ok((0..mesh.n_nodes()).map(|i| f(mesh.node(i))).collect()),
        _ => Err(FemError::InvalidParameter(format!(
            "cannot sample {field:?} at mesh nodes"
        ))),
    }
}

/// States `U⁰..Uⁿ` with times and per-step solve reports.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub reports: Vec<SolveReport>,
    /// Per-step discrete residual norms (zero for the initial states).
    pub residual_norms: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_grid, ElementKind};

    #[test]
    fn checkerboard_values() {
        let f = checkerboard_source(2).unwrap();
        let CoefficientField::Analytic(f) = f else {
            unreachable!()
        };
        assert_eq!(f(&[0.1, 0.1]), 1.0);
        assert_eq!(f(&[0.6, 0.1]), -1.0);
        assert_eq!(f(&[0.0, 0.0]), 1.0);
        // cell boundary belongs to the upper/right cell
        assert_eq!(f(&[0.5, 0.1]), -1.0);
        assert!(checkerboard_source(0).is_err());
    }

    #[test]
    fn sine_series_vanishes_on_unit_square_boundary() {
        let a = sine_series_coefficients(6, 3);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        let CoefficientField::Analytic(f) = multi_frequency_sine(6, 0.5, a).unwrap() else {
            unreachable!()
        };
        for t in [0.0, 0.3, 1.0] {
            assert!(f(&[t, 0.0]).abs() < 1e-14);
            assert!(f(&[0.0, t]).abs() < 1e-14);
            assert!(f(&[t, 1.0]).abs() < 1e-13);
        }
    }

    #[test]
    fn single_mode_amplitude() {
        let mut a = vec![0.0; 4];
        a[0] = 1.0;
        let CoefficientField::Analytic(f) = multi_frequency_sine(2, 0.5, a).unwrap() else {
            unreachable!()
        };
        let expected = std::f64::consts::PI / 4.0 / 2f64.sqrt();
        assert!((f(&[0.5, 0.5]) - expected).abs() < 1e-15);
    }

    #[test]
    fn residual_loss_basic() {
        let k = SparseOperator::from_dense(2, 2, &[2.0, 0.0, 0.0, 3.0], true);
        assert_eq!(residual_loss(&k, &[0.0, 0.0], &[1.0, 2.0], None).unwrap(), 5.0);
        assert_eq!(residual_loss(&k, &[0.5, 1.0], &[1.0, 3.0], None).unwrap(), 0.0);
        let w = SparseOperator::from_dense(2, 2, &[2.0, 0.0, 0.0, 1.0], true);
        assert_eq!(residual_loss(&k, &[0.0, 0.0], &[1.0, 2.0], Some(&w)).unwrap(), 6.0);
    }

    #[test]
    fn mass_problem_sums_to_area() {
        let mesh = generate_grid(ElementKind::Tri3, &[2.0, 1.5], &[3, 4]).unwrap();
        let problem = ProblemSpec {
            kind: ProblemKind::Mass,
            ..ProblemSpec::poisson(CoefficientField::Constant(1.0), CoefficientField::Constant(0.0))
        };
        let disc = Discretization::for_problem(mesh, &problem).unwrap();
        let a = assemble(&problem, &disc).unwrap();
        let total: f64 = a.k.values.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_overlap_last_wins() {
        let mesh = generate_grid(ElementKind::Quad4, &[1.0, 1.0], &[1, 1]).unwrap();
        let dm = DofMap::vector(&mesh);
        let p = ProblemSpec::elasticity(CoefficientField::Constant(1.0), 0.3, vec![])
            .with_dirichlet([0, 1].into_iter().collect(), None, 0.0)
            .with_dirichlet([1].into_iter().collect(), Some(1), 2.0);
        let (dofs, vals) = p.dirichlet_dofs(&dm);
        assert_eq!(dofs, vec![0, 1, 2, 3]);
        assert_eq!(vals, vec![0.0, 0.0, 0.0, 2.0]);
    }
}
