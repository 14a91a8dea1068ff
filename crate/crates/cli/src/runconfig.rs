//! The run configuration file: a JSON document with optional `model` and
//! `train` sections, strict about unknown keys so typos fail loudly.
//! Command-line flags override file values; every command echoes the fully
//! resolved configuration next to its outputs, and re-running from that
//! echo reproduces the run.

use crate::CliError;
use changecap::model::ModelConfig;
use changecap::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("reading config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}
