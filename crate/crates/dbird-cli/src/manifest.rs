//! Run manifests: every artifact-producing command records what it did and
//! content hashes of what it wrote, so a run can be verified and reproduced.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::io::{atomic_write, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: u64,
    /// The fully resolved configuration the run actually used.
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    /// Artifact file name → `sha256:<hex>` of its content.
    pub artifacts: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            artifacts: BTreeMap::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn record_input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Hashes an artifact already on disk and records it under its file name.
    pub fn record_artifact(&mut self, path: &Path) -> Result<(), CliError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.artifacts.insert(name, sha256_file(path)?);
        Ok(())
    }

    /// Writes `manifest.json` into `dir` (atomically). The manifest itself is
    /// not part of its own artifact table.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Schema(format!("cannot serialize manifest: {e}")))?;
        atomic_write(&dir.join(MANIFEST_FILE), json.as_bytes())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::io(format!("cannot hash {}", path.display()), &e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("sha256:{:x}", hasher.finalize()))
}
