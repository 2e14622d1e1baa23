//! Run manifests: a complete, reproducible snapshot of what a command did.
//!
//! Every command writes `<command>_manifest.json` into its output directory,
//! listing the full configuration in effect (flags and defaults), input
//! hashes, counts, and the files it produced. Manifests are never mutated in
//! place: if a rerun produces a different manifest, the previous one is
//! rotated to a numbered sibling first. Timestamps honor `SOURCE_DATE_EPOCH`
//! so deterministic runs produce byte-identical manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub created_unix: u64,
    /// Full configuration snapshot: every flag and default in effect.
    pub config: serde_json::Value,
    pub dataset_hash: Option<String>,
    pub instance_count: Option<usize>,
    pub seed: Option<u64>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub failure_count: usize,
    /// Free-form explanations (filter-order ambiguity, skipped counts, ...).
    pub notes: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: crate::VERSION.to_string(),
            created_unix: now_unix(),
            config,
            dataset_hash: None,
            instance_count: None,
            seed: None,
            cache_hits: 0,
            cache_misses: 0,
            failure_count: 0,
            notes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(OutputRecord {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Write `<command>_manifest.json`, rotating any differing predecessor.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(format!("{}_manifest.json", self.command));
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Other(format!("serialize manifest: {e}")))?;
        if path.exists() {
            let existing = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            if existing != body {
                let mut n = 1;
                loop {
                    let rotated = out_dir.join(format!("{}_manifest_{n}.json", self.command));
                    if !rotated.exists() {
                        std::fs::rename(&path, &rotated).map_err(|e| Error::io(&rotated, e))?;
                        break;
                    }
                    n += 1;
                }
            }
        }
        atomic_write(&path, body.as_bytes())?;
        Ok(path)
    }
}

/// Seconds since the epoch, overridable via `SOURCE_DATE_EPOCH` for
/// reproducible output.
pub fn now_unix() -> u64 {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(n) = v.trim().parse() {
            return n;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Write via a sibling temp file + rename so readers never see a torn file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
