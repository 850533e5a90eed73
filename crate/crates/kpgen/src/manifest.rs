use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KpError, Result};

/// Provenance record written beside every command's outputs. Re-running the
/// command with the recorded configuration reproduces the outputs bitwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub wall_clock_ms: u128,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
            wall_clock_ms: 0,
        }
    }

    /// Atomic write (temp file + rename) next to the outputs.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("manifest.tmp");
        let body = serde_json::to_string_pretty(self).expect("serializable manifest");
        std::fs::write(&tmp, body).map_err(|e| KpError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| KpError::io(path, e))?;
        Ok(())
    }
}
