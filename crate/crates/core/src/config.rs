//! The simulator configuration document: voltage model, cost table and the
//! number of sub-arrays tiles are spread over.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perf::OpCostTable;
use crate::subarray::VoltageModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub voltage: VoltageModel,
    #[serde(default)]
    pub costs: OpCostTable,
    #[serde(default = "default_sub_arrays")]
    pub sub_arrays: usize,
}

fn default_sub_arrays() -> usize {
    4
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { voltage: VoltageModel::default(), costs: OpCostTable::default(), sub_arrays: default_sub_arrays() }
    }
}

impl SimConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sub_arrays == 0 {
            return Err(ConfigError::Invalid("sub_arrays must be at least 1".into()));
        }
        self.costs.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
