use crate::error::{HarnessError, Result};
use crate::formats::{write_json, FORMAT_VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u64,
    pub tool_version: String,
    pub command: String,
    pub spec_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// `running`, then `ok`, `failed` or `error`.
    pub status: String,
    /// Input files the run read, with their hashes.
    pub inputs: Vec<OutputFile>,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Tracks one run directory; the manifest is on disk from the first moment.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn begin(dir: &Path, command: &str, spec_json: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let run = Run {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                format_version: FORMAT_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                spec_hash: sha256_hex(spec_json.as_bytes()),
                seed,
                started_at: now(),
                finished_at: None,
                status: "running".into(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        };
        run.write()?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Hashes a file already written into the run directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        self.manifest.outputs.retain(|o| o.path != name);
        self.manifest.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        self.manifest.inputs.push(OutputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        self.write()
    }

    pub fn finish(mut self, status: &str) -> Result<RunManifest> {
        self.manifest.status = status.to_string();
        self.manifest.finished_at = Some(now());
        self.write()?;
        Ok(self.manifest)
    }

    fn write(&self) -> Result<()> {
        write_json(&self.path(MANIFEST_FILE), &self.manifest)
    }
}
