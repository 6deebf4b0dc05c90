//! Run manifests written beside every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub parallel: bool,
    pub threads: usize,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub conventions: Vec<String>,
    /// Notes specific to this run (cropping, fallbacks, skipped cases).
    pub flags: Vec<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

impl Manifest {
    pub fn new(command: &str, config: impl Serialize) -> CliResult<Manifest> {
        Ok(Manifest {
            tool: "vasq".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: vasq_core::VERSION.into(),
            parallel: vasq_core::par::enabled(),
            threads: vasq_core::par::threads(),
            command: command.into(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).map_err(CliError::runtime)?,
            seeds: BTreeMap::new(),
            conventions: Vec::new(),
            flags: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn conventions(mut self, c: impl IntoIterator<Item = String>) -> Self {
        self.conventions.extend(c);
        self
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        for p in artifact_files(path) {
            self.inputs.push(record(&p)?);
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        for p in artifact_files(path) {
            self.outputs.push(record(&p)?);
        }
        Ok(())
    }

    /// Writes the manifest to `path` as pretty JSON.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        vasq_core::io::write_json(path, self).map_err(CliError::runtime)
    }
}

/// A MetaImage header comes with its raw file.
fn artifact_files(path: &Path) -> Vec<PathBuf> {
    let mut out = vec![path.to_path_buf()];
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mhd")) {
        let raw = path.with_extension("raw");
        if raw.exists() {
            out.push(raw);
        }
    }
    out
}

fn record(path: &Path) -> CliResult<FileRecord> {
    let bytes = fs::read(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileRecord {
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Manifest location for a file output: same directory, extension
/// replaced by `manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

/// Manifest location for a directory output.
pub fn inside(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}
