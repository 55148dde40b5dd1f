use std::path::PathBuf;

use tg_core::FemError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 configuration or input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Fem(e) if e.is_numerical() => 1,
            CliError::VerifyFailed(_) => 1,
            _ => 2,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
