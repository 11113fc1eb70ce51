//! Run manifests: what was run, with which inputs, and the hash of every
//! file written.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::RunOutput;
use crate::config::sha256_hex;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub versions: Versions,
    pub wall_clock_seconds: f64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub weylab_core: String,
    pub weylab_cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            weylab_core: weylab::VERSION.to_string(),
            weylab_cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

pub fn outputs_of(run: &RunOutput) -> Vec<FileHash> {
    run.artifacts
        .iter()
        .map(|a| FileHash {
            path: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
        })
        .collect()
}

/// Writes every artifact and then the manifest listing them.
pub fn write(dir: &Path, run: &RunOutput, manifest: &Manifest) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for a in &run.artifacts {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.bytes).map_err(|e| io(&p, e))?;
    }
    let p = dir.join(manifest_name(&manifest.command));
    let mut text = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Config(e.to_string()))?;
    text.push(b'\n');
    std::fs::write(&p, text).map_err(|e| io(&p, e))
}

/// Compares a fresh run against the stored manifest and the files on disk.
pub fn check(dir: &Path, command: &str, config_hash: &str, run: &RunOutput) -> Result<usize> {
    let p = dir.join(manifest_name(command));
    let text =
        std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
    let stored: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    if stored.config_hash != config_hash {
        return Err(CliError::Config(format!(
            "config hash {config_hash} differs from the manifest's {}",
            stored.config_hash
        )));
    }
    let fresh = outputs_of(run);
    if fresh.len() != stored.outputs.len() {
        return Err(CliError::Check(format!(
            "manifest lists {} outputs, the run produced {}",
            stored.outputs.len(),
            fresh.len()
        )));
    }
    for f in &fresh {
        let listed = stored
            .outputs
            .iter()
            .find(|s| s.path == f.path)
            .ok_or_else(|| CliError::Check(format!("{} is not in the manifest", f.path)))?;
        if listed.sha256 != f.sha256 {
            return Err(CliError::Check(format!("{} differs from the manifest", f.path)));
        }
        let on_disk = std::fs::read(dir.join(&f.path)).map_err(|e| CliError::Check(format!("{}: {e}", f.path)))?;
        if sha256_hex(&on_disk) != f.sha256 {
            return Err(CliError::Check(format!("{} on disk differs from the manifest", f.path)));
        }
    }
    Ok(fresh.len())
}
