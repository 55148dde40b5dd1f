//! Run configuration: a TOML file plus `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};
use tg_core::batch::PlaneModel;
use tg_core::physics::WaveScheme;
use tg_core::solver::{SolveMethod, SolverConfig};
use tg_core::topopt::{SensitivityMethod, SimpParams};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for random initial conditions and benchmark data; `--seed` wins.
    pub seed: Option<u64>,
    pub mesh: MeshSection,
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub time: TimeSection,
    pub topopt: TopoptSection,
    pub output: OutputSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    /// Gmsh file; when set, the generator keys are ignored.
    pub file: Option<PathBuf>,
    /// `grid` or `disk`.
    pub generator: String,
    pub kind: String,
    pub extents: Vec<f64>,
    pub divisions: Vec<usize>,
    pub center: [f64; 2],
    pub radius: f64,
    pub rings: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            file: None,
            generator: "grid".into(),
            kind: "tri3".into(),
            extents: vec![1.0, 1.0],
            divisions: vec![8, 8],
            center: [0.5, 0.5],
            radius: 0.5,
            rings: 14,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    /// `poisson`, `elasticity`, `wave` or `allen_cahn`.
    pub kind: String,
    /// Diffusion coefficient or Young's modulus.
    pub coefficient: f64,
    pub poisson_ratio: f64,
    /// `strain` or `stress`.
    pub plane: String,
    /// `constant`, `sine` (manufactured) or `checkerboard`.
    pub source: String,
    /// Constant source, one value per component.
    pub source_value: Vec<f64>,
    pub checkerboard_k: u32,
    /// `boundary`, `none`, or comma-separated mesh tags.
    pub dirichlet: String,
    pub dirichlet_value: f64,
    /// `sine_series` or `constant`.
    pub initial: String,
    pub initial_value: f64,
    pub sine_k: usize,
    pub sine_r: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            kind: "poisson".into(),
            coefficient: 1.0,
            poisson_ratio: 0.3,
            plane: "strain".into(),
            source: "constant".into(),
            source_value: vec![1.0],
            checkerboard_k: 4,
            dirichlet: "boundary".into(),
            dirichlet_value: 0.0,
            initial: "sine_series".into(),
            initial_value: 0.0,
            sine_k: 6,
            sine_r: 0.5,
        }
    }
}

impl ProblemSection {
    pub fn plane_model(&self) -> CliResult<PlaneModel> {
        match self.plane.as_str() {
            "strain" => Ok(PlaneModel::PlaneStrain),
            "stress" => Ok(PlaneModel::PlaneStress),
            other => Err(CliError::config(format!(
                "problem.plane must be strain or stress, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    pub direct_threshold: usize,
    /// `auto`, `iterative` or `direct`.
    pub method: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_iter: d.max_iter,
            direct_threshold: d.direct_threshold,
            method: "auto".into(),
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> CliResult<SolverConfig> {
        let method = match self.method.as_str() {
            "auto" => SolveMethod::Auto,
            "iterative" => SolveMethod::Iterative,
            "direct" => SolveMethod::Direct,
            other => {
                return Err(CliError::config(format!(
                    "solver.method must be auto, iterative or direct, got {other:?}"
                )))
            }
        };
        let cfg = SolverConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_iter: self.max_iter,
            direct_threshold: self.direct_threshold,
            method,
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    /// Defaults to 5e-4 for the wave and 1e-4 for Allen–Cahn.
    pub dt: Option<f64>,
    pub steps: usize,
    pub c: f64,
    pub a: f64,
    pub eps: f64,
    /// `central` or `crank_nicolson`.
    pub scheme: String,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Write a VTK state every this many steps; 0 writes none.
    pub vtk_every: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            dt: None,
            steps: 100,
            c: 4.0,
            a: 0.1,
            eps: 10.0,
            scheme: "central".into(),
            newton_tol: 1e-10,
            newton_max_iter: 25,
            vtk_every: 10,
        }
    }
}

impl TimeSection {
    pub fn wave_scheme(&self) -> CliResult<WaveScheme> {
        match self.scheme.as_str() {
            "central" => Ok(WaveScheme::CentralDifference),
            "crank_nicolson" => Ok(WaveScheme::CrankNicolson),
            other => Err(CliError::config(format!(
                "time.scheme must be central or crank_nicolson, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopoptSection {
    pub nx: usize,
    pub ny: usize,
    pub penal: f64,
    pub e_max: f64,
    pub e_min: f64,
    pub poisson_ratio: f64,
    pub volume_fraction: f64,
    pub r_min_factor: f64,
    pub move_limit: f64,
    pub iterations: usize,
    pub rho_min: f64,
    pub plane: String,
    /// `adjoint` or `closed_form`.
    pub sensitivity: String,
    pub snapshots: Vec<usize>,
}

impl Default for TopoptSection {
    fn default() -> Self {
        let p = SimpParams::default();
        TopoptSection {
            nx: 60,
            ny: 30,
            penal: p.penal,
            e_max: p.e_max,
            e_min: p.e_min,
            poisson_ratio: p.poisson_ratio,
            volume_fraction: p.volume_fraction,
            r_min_factor: p.r_min_factor,
            move_limit: p.move_limit,
            iterations: p.iterations,
            rho_min: p.rho_min,
            plane: "strain".into(),
            sensitivity: "adjoint".into(),
            snapshots: vec![0, 5, 10, 15, 20, 25, 30, 50],
        }
    }
}

impl TopoptSection {
    pub fn params(&self) -> CliResult<SimpParams> {
        let plane = ProblemSection {
            plane: self.plane.clone(),
            ..ProblemSection::default()
        }
        .plane_model()?;
        let p = SimpParams {
            penal: self.penal,
            e_max: self.e_max,
            e_min: self.e_min,
            poisson_ratio: self.poisson_ratio,
            volume_fraction: self.volume_fraction,
            r_min_factor: self.r_min_factor,
            move_limit: self.move_limit,
            iterations: self.iterations,
            rho_min: self.rho_min,
            plane,
        };
        p.validate().map_err(|e| CliError::config(e.to_string()))?;
        if self.nx == 0 || self.ny == 0 {
            return Err(CliError::config("topopt.nx and topopt.ny must be >= 1"));
        }
        Ok(p)
    }

    pub fn sensitivity_method(&self) -> CliResult<SensitivityMethod> {
        match self.sensitivity.as_str() {
            "adjoint" => Ok(SensitivityMethod::Adjoint),
            "closed_form" => Ok(SensitivityMethod::ClosedForm),
            other => Err(CliError::config(format!(
                "topopt.sensitivity must be adjoint or closed_form, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub vtk: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            vtk: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub kind: String,
    /// Target element counts of the size sweep.
    pub elements: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub batch_elements: usize,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            kind: "tri3".into(),
            elements: vec![10_000, 31_623, 100_000, 316_228, 1_000_000],
            batch_sizes: vec![1, 2, 5, 10, 20, 50, 100],
            batch_elements: 20_000,
            repeats: 3,
        }
    }
}

/// Parses `text` and applies overrides of the form `section.key=value`,
/// where `value` is any TOML value and falls back to a bare string.
pub fn parse_config(text: &str, overrides: &[String]) -> CliResult<RunConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
    for ov in overrides {
        let (path, raw) = ov
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override {ov:?} is not of the form key=value")))?;
        let value = parse_value(raw.trim());
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::config(format!("override key {path:?} is malformed")));
        }
        let mut cursor = &mut table;
        for k in &keys[..keys.len() - 1] {
            let entry = cursor
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cursor = entry
                .as_table_mut()
                .ok_or_else(|| CliError::config(format!("override {path:?}: {k} is not a section")))?;
        }
        cursor.insert(keys[keys.len() - 1].to_string(), value);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.to_string()))
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Fem(tg_core::FemError::io(p, e)))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c.problem.kind, "poisson");
        assert_eq!(c.topopt.iterations, 51);
        assert_eq!(c.solver.rel_tol, 1e-10);
    }

    #[test]
    fn overrides_win_over_file() {
        let text = "[time]\ndt = 0.1\n[mesh]\nkind = \"quad4\"\n";
        let c = parse_config(
            text,
            &[
                "time.dt=0.25".into(),
                "mesh.kind=tet4".into(),
                "mesh.divisions=[2,3,4]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.time.dt, Some(0.25));
        assert_eq!(c.mesh.kind, "tet4");
        assert_eq!(c.mesh.divisions, vec![2, 3, 4]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("[solver]\ntolerance = 1.0\n", &[]).is_err());
        assert!(parse_config("", &["mesh.colour=red".into()]).is_err());
        assert!(parse_config("[nonsense]\n", &[]).is_err());
        assert!(parse_config("", &["noequals".into()]).is_err());
    }

    #[test]
    fn bad_enumerations_are_config_errors() {
        let c = parse_config("", &["solver.method=magic".into()]).unwrap();
        assert_eq!(c.solver.to_config().unwrap_err().exit_code(), 2);
        let c = parse_config("", &["topopt.volume_fraction=0".into()]).unwrap();
        assert!(c.topopt.params().is_err());
    }
}
