use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the assembly / solve / optimization pipeline.
#[derive(Error, Debug)]
pub enum FemError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unsupported mesh: {0}")]
    UnsupportedMesh(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("element {element} is inverted or degenerate (det J = {det:e})")]
    Orientation { element: usize, det: f64 },
    #[error("unsupported quadrature degree {degree}; supported degrees are 1, 2, 3, 4")]
    QuadratureDegree { degree: usize },
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{context}: solver did not converge after {iterations} iterations (relative residual {rel_residual:e})")]
    NotConverged {
        context: String,
        iterations: usize,
        rel_residual: f64,
    },
    #[error("singular system: {0}")]
    Singular(String),
}

impl FemError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FemError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, FemError::NotConverged { .. } | FemError::Singular(_))
    }
}

pub type Result<T> = std::result::Result<T, FemError>;
