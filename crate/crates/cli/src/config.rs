use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

/// Optional TOML defaults. Keys mirror the long flag names with `_` for `-`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub preprocess: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub class_order: Option<Vec<String>>,
    pub stats: Option<String>,
    pub steps: Option<usize>,
    pub scenario: Option<String>,
    pub graph: Option<String>,
    pub start: Option<String>,
    pub engine: Option<String>,
    pub classes: Option<Vec<String>>,
    pub features: Option<usize>,
    pub trials: Option<usize>,
    pub method: Option<String>,
    pub max_steps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}
