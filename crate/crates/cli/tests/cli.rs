use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tg"))
        .args(args)
        .output()
        .expect("tg runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Rows of a CSV as string fields, header first.
fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let c = rows[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[c].clone()).collect()
}

#[test]
fn poisson3d_reaches_relative_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "solve",
        "--out",
        &out_arg(dir.path()),
        "mesh.kind=tet4",
        "mesh.extents=[1,1,1]",
        "mesh.divisions=[8,8,8]",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("RelRes ="));
    let rows = read_csv(&dir.path().join("solve_report.csv"));
    let res: f64 = column(&rows, "rel_residual")[0].parse().unwrap();
    assert!(res < 1e-10, "{res}");
    assert_eq!(column(&rows, "converged")[0], "true");
    let vtk = fs::read_to_string(dir.path().join("solution.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version"));
    assert!(vtk.contains("POINT_DATA 729"));
}

#[test]
fn missing_mesh_file_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "solve",
        "--out",
        &out_arg(dir.path()),
        "mesh.file=/definitely/not/here.msh",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.msh"), "{}", stderr(&o));
}

#[test]
fn incompressible_elasticity_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "solve",
        "--out",
        &out_arg(dir.path()),
        "problem.kind=elasticity",
        "problem.poisson_ratio=0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0.5"));
}

#[test]
fn unknown_key_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&["solve", "--out", &out_arg(dir.path()), "solver.tolerance=1e-3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tg(&["solve", "--config", "/no/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/config.toml"));
}

#[test]
fn non_convergence_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "solve",
        "--out",
        &out_arg(dir.path()),
        "mesh.divisions=[30,30]",
        "solver.method=iterative",
        "solver.max_iter=2",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    // the report is still written
    let rows = read_csv(&dir.path().join("solve_report.csv"));
    assert_eq!(column(&rows, "converged")[0], "false");
}

#[test]
fn config_file_values_lose_to_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[mesh]\ndivisions = [4, 4]\n\n[output]\nvtk = false\n").unwrap();
    let out = dir.path().join("a");
    let o = tg(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&read_csv(&out.join("solve_report.csv")), "nodes")[0], "25");
    assert!(!out.join("solution.vtk").exists());
    let out = dir.path().join("b");
    let o = tg(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "mesh.divisions=[6,6]",
    ]);
    assert!(o.status.success());
    assert_eq!(column(&read_csv(&out.join("solve_report.csv")), "nodes")[0], "49");
}

#[test]
fn elasticity_on_bundled_hollow_cube() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/hollow_cube.msh");
    let o = tg(&[
        "solve",
        "--out",
        &out_arg(dir.path()),
        "problem.kind=elasticity",
        &format!("mesh.file={}", mesh.display()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("solve_report.csv"));
    assert_eq!(column(&rows, "elements")[0], "2688");
    let vtk = fs::read_to_string(dir.path().join("solution.vtk")).unwrap();
    assert!(vtk.contains("VECTORS displacement"));
}

#[test]
fn wave_on_unit_square_converges_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "timestep",
        "--out",
        &out_arg(dir.path()),
        "problem.kind=wave",
        "mesh.divisions=[16,16]",
        "time.steps=100",
        "time.vtk_every=50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(rows.len(), 102);
    assert!(column(&rows, "converged")[1..].iter().all(|c| c == "true"));
    for step in [0, 50, 100] {
        assert!(dir.path().join(format!("state_{step:05}.vtk")).exists());
    }
}

#[test]
fn nonpositive_time_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for dt in ["0", "-1e-3"] {
        let o = tg(&[
            "timestep",
            "--out",
            &out_arg(dir.path()),
            "problem.kind=wave",
            &format!("time.dt={dt}"),
        ]);
        assert_eq!(o.status.code(), Some(2), "dt = {dt}");
    }
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn allen_cahn_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = tg(&[
            "timestep",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "problem.kind=allen_cahn",
            "mesh.divisions=[12,12]",
            "time.steps=10",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("trajectory.csv")).unwrap()
    };
    let (a, b, c) = (run("a", "3"), run("b", "3"), run("c", "4"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn topopt_full_volume_budget_stays_solid() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "topopt",
        "--out",
        &out_arg(dir.path()),
        "topopt.nx=12",
        "topopt.ny=6",
        "topopt.iterations=5",
        "topopt.volume_fraction=1.0",
        "topopt.snapshots=[0,5]",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("history.csv"));
    assert_eq!(rows.len(), 7);
    let c: Vec<f64> = column(&rows, "compliance").iter().map(|v| v.parse().unwrap()).collect();
    assert!(c.iter().all(|v| (v - c[0]).abs() <= 1e-9 * c[0]));
    let vtk = fs::read_to_string(dir.path().join("density_final.vtk")).unwrap();
    assert!(vtk.contains("CELL_DATA 72"));
    let densities: Vec<f64> = vtk
        .split("LOOKUP_TABLE default\n")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(densities, vec![1.0; 72]);
    assert!(dir.path().join("density_005.vtk").exists());
}

#[test]
fn topopt_zero_move_limit_freezes_design() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "topopt",
        "--out",
        &out_arg(dir.path()),
        "topopt.nx=12",
        "topopt.ny=6",
        "topopt.iterations=4",
        "topopt.move_limit=0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("history.csv"));
    let c = column(&rows, "compliance");
    assert!(c.iter().all(|v| *v == c[0]));
    assert!(column(&rows, "change").iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn verify_passes_and_perturbation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&["verify", "--out", &out_arg(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let rows = read_csv(&dir.path().join("verify.csv"));
    assert!(column(&rows, "passed").iter().all(|p| p == "true"));
    let order = column(&rows, "check")
        .iter()
        .position(|c| c == "poisson_2d_convergence_order")
        .unwrap();
    assert!(column(&rows, "value")[order].parse::<f64>().unwrap() >= 1.8);

    let o = tg(&["verify", "--out", &out_arg(dir.path()), "--perturb"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn bench_writes_plan_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let o = tg(&[
        "bench",
        "--out",
        &out_arg(dir.path()),
        "bench.elements=[500,2000]",
        "bench.batch_sizes=[1,3]",
        "bench.batch_elements=500",
        "bench.repeats=1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plan = read_csv(&dir.path().join("bench.csv"));
    assert_eq!(plan[0], ["method", "elements", "dofs", "batch", "nnz"]);
    assert_eq!(plan.len(), 1 + 2 * 5 + 2);
    let timing = read_csv(&dir.path().join("bench_timing.csv"));
    assert_eq!(timing[0], ["method", "elements", "dofs", "batch", "seconds"]);
    assert!(column(&timing, "seconds")
        .iter()
        .all(|s| s.parse::<f64>().unwrap() >= 0.0));
    assert!(dir.path().join("bench_fit_timing.csv").exists());
}

#[test]
fn thread_count_must_be_positive() {
    let o = tg(&["verify", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
