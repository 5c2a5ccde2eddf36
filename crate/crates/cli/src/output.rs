//! Writing artifacts and the run manifest.

use std::path::Path;

use serde::Serialize;

use crate::config::Experiment;
use crate::error::{CliError, CliResult};
use crate::experiments::Artifact;

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'static str,
    /// Config file as given; relative inputs resolve against its directory.
    config_path: String,
    seed: u64,
    config: &'a Experiment,
    outputs: Vec<&'a str>,
}

/// Manifest bytes; contains nothing run-specific beyond the seed, so
/// repeated runs produce identical files.
pub fn manifest(experiment: &Experiment, config_path: &Path, seed: u64, artifacts: &[Artifact]) -> CliResult<Vec<u8>> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: experiment.kind().name(),
        config_path: config_path.display().to_string(),
        seed,
        config: experiment,
        outputs: artifacts.iter().map(|a| a.name.as_str()).collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| coopsim_core::Error::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}

/// Write every artifact plus `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, experiment: &Experiment, config_path: &Path, seed: u64, artifacts: &[Artifact]) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    for a in artifacts {
        write_file(&dir.join(&a.name), &a.bytes)?;
    }
    write_file(&dir.join(MANIFEST), &manifest(experiment, config_path, seed, artifacts)?)
}
