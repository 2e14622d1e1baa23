//! JSON-lines file helpers used by every stage that persists records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

/// Write one record per line. The file is created (or truncated) atomically
/// via a sibling temp file + rename.
pub fn write_all<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for rec in records {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::Other(format!("serialize {}: {e}", path.display())))?;
            writeln!(w, "{line}").map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read every line as a record. Fails on the first malformed line: persisted
/// harness files are machine-written, so damage means the file is unusable.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            kind: "jsonl",
            line: idx + 1,
            detail: format!("{}: {e}", path.display()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Row {
        a: u32,
        b: String,
    }

    #[test]
    fn round_trips_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![
            Row {
                a: 1,
                b: "x".into(),
            },
            Row {
                a: 2,
                b: "y".into(),
            },
        ];
        write_all(&path, &rows).unwrap();
        let back: Vec<Row> = read_all(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn rejects_damaged_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        std::fs::write(&path, "{\"a\":1,\"b\":\"x\"}\nnot json\n").unwrap();
        assert!(read_all::<Row>(&path).is_err());
    }
}
