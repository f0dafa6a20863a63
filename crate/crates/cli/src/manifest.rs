//! Run manifests: a JSON record of resolved settings, input digests, and
//! planned outputs, written before any output file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub created_unix_secs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub settings: serde_json::Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>, settings: serde_json::Value) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            created_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            settings,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `<stem>.manifest.json`; call before writing any output.
    pub fn write_next_to(&self, stem: &Path) -> Result<PathBuf, CliError> {
        let mut name = stem.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = stem.with_file_name(name);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
