//! Run identity: config hash, input checksums and output directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checksums of every file a command read, keyed by path.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Inputs(BTreeMap<String, String>);

impl Inputs {
    /// Hashes `path` and returns it for chaining.
    pub fn track<'p>(&mut self, path: &'p Path) -> Result<&'p Path> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.0.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(path)
    }
}

/// Embedded in every artifact; equal manifests mean equal metric outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub config_sha256: String,
    pub inputs: Inputs,
    pub seeds: Vec<u64>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, inputs: Inputs, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            config: cfg.entries(),
            config_sha256: sha256_hex(cfg.canonical().as_bytes()),
            inputs,
            seeds,
        }
    }

    pub fn short_hash(&self) -> &str {
        &self.config_sha256[..12]
    }
}

/// `<out_dir>/<label>-<hash12>[-s<seed>]`, created if missing.
pub fn run_dir(out_dir: &Path, label: &str, manifest: &Manifest, seed: Option<u64>) -> Result<PathBuf> {
    let mut name = format!("{label}-{}", manifest.short_hash());
    if let Some(seed) = seed {
        name.push_str(&format!("-s{seed}"));
    }
    let dir = out_dir.join(name);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
