//! Experiment harness: configuration, theorem verification, training runs,
//! robustness sweeps and their CSV/SVG outputs.

pub mod config;
pub mod csvio;
pub mod plot;
pub mod stamp;
pub mod sweep;
pub mod train;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv {path}: {detail}")]
    Csv { path: PathBuf, detail: String },
    #[error("checkpoint {path} does not fit the environment: {detail}")]
    Mismatch { path: PathBuf, detail: String },
    #[error(transparent)]
    Algo(#[from] riskgrad_core::algos::AlgoError),
    #[error(transparent)]
    Env(#[from] riskgrad_core::envs::EnvError),
    #[error(transparent)]
    Disturbance(#[from] riskgrad_core::disturbance::DisturbanceError),
    #[error(transparent)]
    Risk(#[from] riskgrad_core::risk::RiskError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}
