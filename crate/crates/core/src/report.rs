//! Deterministic artifact formatting: numbers, CSV files, run ids, manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// 17 significant digits, round-trippable.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Hex prefix of the SHA-256 of the given bytes.
pub fn run_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    stem: String,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, command: &str, run_id: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: format!("{command}_{run_id}"),
            written: Vec::new(),
        })
    }

    /// Writes `<command>_<run-id><suffix>` and returns its path.
    pub fn write(&mut self, suffix: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(format!("{}{suffix}", self.stem));
        fs::write(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| crate::error::LabError::Inconsistent(e.to_string()))?;
        text.push('\n');
        self.write(suffix, text.as_bytes())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }
}
