mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tg_core::batch::CoefficientField;
use tg_core::mesh::gmsh::load_gmsh;
use tg_core::mesh::{generate_grid, ElementKind, Mesh};
use tg_core::physics::{assemble, nodal_values, residual_loss, Discretization, ProblemSpec};
use tg_core::reduce::SparseOperator;
use tg_core::solver::{bicgstab, condense, dense_solve, rel_error, rel_linear_residual, solve, SolverConfig};

fn solve_problem(mesh: Mesh, problem: &ProblemSpec) -> (Discretization, Vec<f64>, f64, bool) {
    let disc = Discretization::for_problem(mesh, problem).unwrap();
    let sys_parts = assemble(problem, &disc).unwrap();
    let (dofs, vals) = problem.dirichlet_dofs(&disc.dofmap);
    let sys = condense(&sys_parts.k, &sys_parts.f, &dofs, &vals).unwrap();
    let (u, report) = sys.solve(&SolverConfig::default(), None).unwrap();
    let res = rel_linear_residual(&sys.k_ff, &sys.restrict(&u), &sys.f_f).unwrap();
    (disc, u, res, report.converged)
}

#[test]
fn manufactured_poisson_converges_at_second_order() {
    let exact = CoefficientField::analytic(|x| (PI * x[0]).sin() * (PI * x[1]).sin());
    let source = CoefficientField::analytic(|x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin());
    let mut errors = Vec::new();
    for n in [8, 16, 32] {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[n, n]).unwrap();
        let boundary = mesh.boundary_nodes();
        let problem =
            ProblemSpec::poisson(CoefficientField::Constant(1.0), source.clone()).with_dirichlet(boundary, None, 0.0);
        let (disc, u, res, converged) = solve_problem(mesh, &problem);
        assert!(converged && res < 1e-10, "n = {n}: residual {res}");
        errors.push(rel_error(&u, &nodal_values(&disc.mesh, &exact).unwrap()).unwrap());
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "observed order {order} from errors {errors:?}");
    }
}

#[test]
fn poisson_3d_unit_cube() {
    let mesh = generate_grid(ElementKind::Tet4, &[1.0, 1.0, 1.0], &[10, 10, 10]).unwrap();
    let boundary = mesh.boundary_nodes();
    let problem = ProblemSpec::poisson(CoefficientField::Constant(1.0), CoefficientField::Constant(1.0))
        .with_dirichlet(boundary.clone(), None, 0.0);
    let (disc, u, res, converged) = solve_problem(mesh, &problem);
    assert!(converged);
    assert!(res < 1e-10, "relative residual {res}");
    for (i, v) in u.iter().enumerate() {
        if boundary.contains(&i) {
            assert_eq!(*v, 0.0);
        } else {
            assert!(*v > 0.0);
        }
    }
    // the centre value of -Δu = 1 on the unit cube is about 0.0562
    let centre = (0..disc.mesh.n_nodes())
        .find(|&i| disc.mesh.node(i).iter().all(|&x| (x - 0.5).abs() < 1e-12))
        .unwrap();
    assert!((u[centre] - 0.0562).abs() < 0.003, "centre value {}", u[centre]);
}

fn rigid_modes_3d(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.n_nodes();
    let mut modes = Vec::new();
    for c in 0..3 {
        let mut t = vec![0.0; 3 * n];
        (0..n).for_each(|a| t[3 * a + c] = 1.0);
        modes.push(t);
    }
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let mut r = vec![0.0; 3 * n];
        for a in 0..n {
            r[3 * a + i] = -mesh.node(a)[j];
            r[3 * a + j] = mesh.node(a)[i];
        }
        modes.push(r);
    }
    modes
}

fn elasticity_problem(mesh: &Mesh) -> ProblemSpec {
    let body = vec![CoefficientField::Constant(1.0); 3];
    ProblemSpec::elasticity(CoefficientField::Constant(1.0), 0.3, body).with_dirichlet(
        mesh.topological_boundary_nodes(),
        None,
        0.0,
    )
}

#[test]
fn elasticity_unit_cube_is_spd_and_kills_rigid_modes() {
    let mesh = generate_grid(ElementKind::Tet4, &[1.0, 1.0, 1.0], &[4, 4, 4]).unwrap();
    let problem = elasticity_problem(&mesh);
    let disc = Discretization::for_problem(mesh, &problem).unwrap();
    let parts = assemble(&problem, &disc).unwrap();
    for mode in rigid_modes_3d(&disc.mesh) {
        let r = parts.k.matvec(&mode);
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-10, "rigid mode residual {worst}");
    }
    let (dofs, vals) = problem.dirichlet_dofs(&disc.dofmap);
    let sys = condense(&parts.k, &parts.f, &dofs, &vals).unwrap();
    assert_eq!(sys.k_ff.asymmetry(), 0.0);
    let n = sys.n_free();
    let dense = DMatrix::from_row_slice(n, n, &sys.k_ff.to_dense());
    assert!(dense.cholesky().is_some(), "condensed elasticity operator is not SPD");
    let (u, report) = sys.solve(&SolverConfig::default(), None).unwrap();
    assert!(report.converged && report.rel_residual < 1e-10);
    // (1,1,1) load is symmetric under coordinate permutation
    let c = (0..disc.mesh.n_nodes())
        .find(|&i| disc.mesh.node(i).iter().all(|&x| (x - 0.5).abs() < 1e-12))
        .unwrap();
    assert!(u[3 * c] > 0.0);
}

#[test]
fn elasticity_on_hollow_cube_file() {
    let mesh = load_gmsh(common::data_dir().join("hollow_cube.msh")).unwrap();
    assert_eq!(mesh.n_elements(), 2688);
    let problem = elasticity_problem(&mesh);
    let (_, u, res, converged) = solve_problem(mesh, &problem);
    assert!(converged && res < 1e-10, "residual {res}");
    assert!(u.iter().all(|v| v.is_finite()) && u.iter().any(|v| *v > 0.0));
}

#[test]
fn bundled_meshes_load() {
    let dir = common::data_dir();
    let disk = load_gmsh(dir.join("disk.msh")).unwrap();
    assert_eq!((disk.n_nodes(), disk.n_elements()), (631, 1176));
    let lshape = load_gmsh(dir.join("lshape.msh")).unwrap();
    assert_eq!((lshape.n_nodes(), lshape.n_elements()), (408, 726));
    let (lo, hi) = disk.bounding_box();
    assert!((hi[0] - lo[0] - 1.0).abs() < 1e-12);
    let area: f64 = Discretization::new(lshape, 1, false)
        .unwrap()
        .element_volumes()
        .iter()
        .sum();
    assert!((area - 0.75).abs() < 1e-12);
}

#[test]
fn elasticity_rejects_incompressible_ratio() {
    let mesh = generate_grid(ElementKind::Tet4, &[1.0, 1.0, 1.0], &[1, 1, 1]).unwrap();
    let problem = ProblemSpec::elasticity(CoefficientField::Constant(1.0), 0.5, vec![]);
    let disc = Discretization::for_problem(mesh, &problem).unwrap();
    assert!(assemble(&problem, &disc).is_err());
}

#[test]
fn solvers_match_dense_oracle_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for n in [5, 20, 60] {
        // diagonally dominant nonsymmetric and SPD-ish systems
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if rng.gen_bool(0.3) {
                    a[i * n + j] = rng.gen_range(-1.0..1.0);
                }
            }
            a[i * n + i] = n as f64 * 0.5 + 1.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = SparseOperator::from_dense(n, n, &a, false);
        let oracle = DMatrix::from_row_slice(n, n, &a)
            .lu()
            .solve(&DVector::from_vec(b.clone()))
            .unwrap();
        let (x, report) = bicgstab(&op, &b, None, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert!(rel_error(&x, oracle.as_slice()).unwrap() < 1e-9);
        let direct = dense_solve(&op, &b).unwrap();
        assert!(rel_error(&direct, oracle.as_slice()).unwrap() < 1e-12);
        let (y, _) = solve(&op, &b, Some(&x), &SolverConfig::default()).unwrap();
        assert!(rel_error(&y, oracle.as_slice()).unwrap() < 1e-9);
    }
}

#[test]
fn residual_loss_vanishes_at_the_solution() {
    let mesh = generate_grid(ElementKind::Quad4, &[1.0, 1.0], &[6, 6]).unwrap();
    let boundary = mesh.boundary_nodes();
    let problem = ProblemSpec::poisson(CoefficientField::Constant(2.0), CoefficientField::Constant(1.0))
        .with_dirichlet(boundary, None, 0.0);
    let disc = Discretization::for_problem(mesh, &problem).unwrap();
    let parts = assemble(&problem, &disc).unwrap();
    let (dofs, vals) = problem.dirichlet_dofs(&disc.dofmap);
    let sys = condense(&parts.k, &parts.f, &dofs, &vals).unwrap();
    let (u, _) = sys.solve(&SolverConfig::default(), None).unwrap();
    let uf = sys.restrict(&u);
    let at_solution = residual_loss(&sys.k_ff, &uf, &sys.f_f, None).unwrap();
    assert!(at_solution < 1e-20 * sys.f_f.iter().map(|v| v * v).sum::<f64>());
    let off = residual_loss(&sys.k_ff, &vec![0.0; uf.len()], &sys.f_f, None).unwrap();
    assert!(off > 0.0);
}
