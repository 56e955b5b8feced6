//! Run directory bookkeeping: every artifact is hashed on write and listed in
//! `manifest.json` together with stage timings and the config snapshot.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CONFIG_NAME: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Success,
    SolverFailure,
    ConfigError,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: Value,
    /// Headline numbers of the command (for `eig`, `lambda1`).
    pub summary: Value,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Value> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory being filled by one command.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<OutputEntry>,
    timings: Vec<StageTiming>,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            outputs: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        std::fs::write(self.root.join(name), bytes)?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn outputs(&self) -> &[OutputEntry] {
        &self.outputs
    }

    /// Write `manifest.json`; it is not listed among its own outputs.
    pub fn finish(
        self,
        command: &str,
        seed: u64,
        config: Value,
        status: RunStatus,
        error: Option<String>,
        summary: Value,
    ) -> Result<RunManifest> {
        let mut outputs = self.outputs;
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            status,
            error,
            config,
            summary,
            timings: self.timings,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.root.join(MANIFEST_NAME), text)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn rewrites_replace_the_inventory_entry() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path()).unwrap();
        run.write("a.txt", "one").unwrap();
        run.write("a.txt", "two").unwrap();
        assert_eq!(run.outputs().len(), 1);
        assert_eq!(run.outputs()[0].sha256, sha256_hex(b"two"));
    }
}
