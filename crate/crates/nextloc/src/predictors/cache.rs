//! Append-only response cache keyed by request hash.
//!
//! The cache file is JSON-lines of [`RawResponse`] records; replay returns
//! bit-identical text, so a warm rerun touches the network zero times and
//! reproduces result files byte for byte. Writes go through one serialized
//! writer; at most one entry exists per request hash (first write wins).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::RawResponse;
use crate::{Error, Result};

pub struct ResponseCache {
    path: PathBuf,
    inner: Mutex<Inner>,
}

struct Inner {
    entries: HashMap<String, RawResponse>,
    writer: BufWriter<File>,
}

impl ResponseCache {
    /// Open (or create) a cache file and load its entries.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: RawResponse =
                    serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                        kind: "cache",
                        line: idx + 1,
                        detail: e.to_string(),
                    })?;
                entries.entry(entry.request_hash.clone()).or_insert(entry);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ResponseCache {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner {
                entries,
                writer: BufWriter::new(file),
            }),
        })
    }

    /// In-memory cache for tests and one-shot runs.
    pub fn ephemeral() -> Self {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("nextloc-cache-{}.jsonl", std::process::id()));
        let _ = std::fs::remove_file(&path);
        Self::open(&path).expect("ephemeral cache")
    }

    pub fn get(&self, request_hash: &str) -> Option<RawResponse> {
        self.inner
            .lock()
            .unwrap()
            .entries
            .get(request_hash)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Insert and persist; an existing entry for the same hash is kept and
    /// the new one discarded.
    pub fn put(&self, response: &RawResponse) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        if inner.entries.contains_key(&response.request_hash) {
            return Ok(());
        }
        let mut stored = response.clone();
        stored.from_cache = false;
        let line = serde_json::to_string(&stored)
            .map_err(|e| Error::Other(format!("serialize cache entry: {e}")))?;
        writeln!(inner.writer, "{line}").map_err(|e| Error::io(&self.path, e))?;
        inner.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        inner.entries.insert(stored.request_hash.clone(), stored);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(hash: &str, text: &str) -> RawResponse {
        RawResponse {
            instance_id: "i1".into(),
            model: "m".into(),
            run_index: 1,
            text: text.into(),
            latency_ms: 5,
            from_cache: false,
            request_hash: hash.into(),
        }
    }

    #[test]
    fn replay_is_bit_identical_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache
                .put(&response("h1", "payload \u{1F30D} bytes"))
                .unwrap();
            cache.put(&response("h2", "other")).unwrap();
        }
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("h1").unwrap().text, "payload \u{1F30D} bytes");
    }

    #[test]
    fn first_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = ResponseCache::open(&path).unwrap();
        cache.put(&response("h1", "first")).unwrap();
        cache.put(&response("h1", "second")).unwrap();
        assert_eq!(cache.get("h1").unwrap().text, "first");
        assert_eq!(cache.len(), 1);
        // the file holds exactly one line
        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 1);
    }
}
