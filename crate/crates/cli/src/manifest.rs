//! Run manifests and atomic, hashed file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_file: Option<String>,
    /// Effective config after flags were applied.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Path to SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// Path to SHA-256 of every file written.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
}

/// Collects what a command reads and writes.
pub struct Run {
    start: Instant,
    config_file: Option<String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
}

impl Run {
    pub fn start(config_file: Option<&Path>) -> anyhow::Result<Self> {
        let mut run = Self {
            start: Instant::now(),
            config_file: config_file.map(|p| p.display().to_string()),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: Vec::new(),
        };
        if let Some(p) = config_file {
            run.read(p)?;
        }
        Ok(run)
    }

    /// Reads an input file and records its hash.
    pub fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        write_atomic(path, bytes)?;
        self.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json(&mut self, path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    pub fn manifest(&self, config: &Config) -> anyhow::Result<RunManifest> {
        Ok(RunManifest {
            command: std::env::args().collect(),
            config_file: self.config_file.clone(),
            config: serde_json::to_value(config)?,
            seeds: self.seeds.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
        })
    }

    /// Writes the manifest to `path`, or prints it to stderr when there is
    /// no output location.
    pub fn finish(self, config: &Config, path: Option<&Path>) -> anyhow::Result<()> {
        let m = self.manifest(config)?;
        match path {
            Some(p) => {
                let mut bytes = serde_json::to_vec_pretty(&m)?;
                bytes.push(b'\n');
                write_atomic(p, &bytes)
            }
            None => {
                eprintln!("manifest: {}", serde_json::to_string(&m)?);
                Ok(())
            }
        }
    }
}
