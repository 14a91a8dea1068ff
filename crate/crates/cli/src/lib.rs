//! Command implementations behind the `changecap` binary. Each command is
//! an ordinary function over a typed argument struct so tests drive them
//! in-process; the binary is a thin clap dispatcher.
//!
//! Exit-code contract (stable for scripting): 0 success, 2 usage error,
//! 3 data error, 4 numeric divergence.

pub mod commands;
pub mod plot;
pub mod runconfig;

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }

    pub fn data(err: impl std::fmt::Display) -> Self {
        CliError::Data(err.to_string())
    }

    pub fn usage(err: impl std::fmt::Display) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<changecap::data::DataError> for CliError {
    fn from(e: changecap::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<changecap::checkpoint::CheckpointError> for CliError {
    fn from(e: changecap::checkpoint::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<changecap::model::ModelError> for CliError {
    fn from(e: changecap::model::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<changecap::train::TrainError> for CliError {
    fn from(e: changecap::train::TrainError) -> Self {
        match e {
            changecap::train::TrainError::Diverged { .. } => CliError::Divergence(e.to_string()),
            changecap::train::TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}
