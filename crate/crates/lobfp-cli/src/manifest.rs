//! Run manifests: every command records its resolved configuration, input
//! digests, seed and outputs, so any seeded run can be reproduced and
//! verified bit for bit.

use anyhow::Result;
use lobfp_core::numerics::fnv1a64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_ms: u128,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    command: String,
    config_repr: String,
    inputs: Vec<FileDigest>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config_repr: String, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config_repr,
            inputs: Vec::new(),
            seed,
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            digest: format!("{:016x}", fnv1a64(bytes)),
        });
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(self, out_dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA,
            command: self.command.clone(),
            config_hash: format!("{:016x}", fnv1a64(self.config_repr.as_bytes())),
            inputs: self.inputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_ms: self.started.elapsed().as_millis(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        };
        let path = out_dir.join(format!("{}-manifest.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Write a file and register it as an output.
pub fn emit(mb: &mut ManifestBuilder, path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    mb.output(path);
    Ok(())
}
