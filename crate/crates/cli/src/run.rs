//! Per-invocation bookkeeping: inputs read, outputs written, timings, manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    config_path: Option<String>,
    seed: u64,
    threads: Option<usize>,
    config: BTreeMap<String, String>,
    inputs: &'a [Artifact],
    outputs: &'a [Artifact],
    /// Wall-clock seconds per phase; the only nondeterministic content.
    timings_seconds: &'a BTreeMap<String, f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub struct Run {
    pub subcommand: &'static str,
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    out: PathBuf,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
    timings: BTreeMap<String, f64>,
}

impl Run {
    pub fn new(
        subcommand: &'static str,
        config: RunConfig,
        config_path: Option<PathBuf>,
        seed: u64,
        threads: Option<usize>,
        out: PathBuf,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(&out)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self {
            subcommand,
            config,
            config_path,
            seed,
            threads,
            out,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes =
            fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(Artifact {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    /// Writes `bytes` to `name` relative to the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f(self);
        self.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn finish(self) -> Result<(), CliError> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
            threads: self.threads,
            config: self.config.echo(),
            inputs: &self.inputs,
            outputs: &self.outputs,
            timings_seconds: &self.timings,
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Numeric(e.to_string()))?;
        fs::write(self.out.join(MANIFEST_FILE), json)?;
        Ok(())
    }
}
