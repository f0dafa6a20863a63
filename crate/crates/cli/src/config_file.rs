//! Optional TOML configuration layered under the command-line flags.
//! Flags always win; the file only supplies defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delimiter: Option<String>,
    pub value_kind: Option<String>,
    pub rater_total: Option<u32>,
    pub threshold: Option<u32>,
    pub rank: Option<usize>,
    pub l2: Option<f64>,
    pub correction: Option<String>,
    pub binarize_threshold: Option<f64>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub fractions: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub min_interval_ms: Option<u64>,
    pub auth_env: Option<String>,
    pub cache: Option<PathBuf>,
    pub plural_overrides: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }
}

/// Flag beats file beats built-in default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag beats file; no default.
pub fn resolve_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
