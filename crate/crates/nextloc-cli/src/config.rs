//! Plain key=value configuration files. Lines starting with `#` are
//! comments; command-line flags always override file values.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let body = std::fs::read_to_string(path)
            .with_context(|| format!("read config {}", path.display()))?;
        let mut values = HashMap::new();
        for (idx, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), idx + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }

    pub fn get_bool(&self, key: &str) -> bool {
        matches!(
            self.values.get(key).map(|s| s.as_str()),
            Some("1") | Some("true") | Some("yes")
        )
    }

    /// Flag value if given, else the parsed file value.
    pub fn merge<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}={raw:?}: {e}")),
            None => Ok(None),
        }
    }

    /// String merge where the flag has a (clap) default: the file value wins
    /// only when the flag was left at its default marker `None`.
    pub fn merge_str(&self, key: &str, flag: Option<String>) -> Result<String> {
        Ok(flag.or_else(|| self.get(key)).unwrap_or_default())
    }

    pub fn merge_str_opt(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.get(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# run settings\nseed=42\nshots = few\nminute_precision=true\n",
        )
        .unwrap();
        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.merge::<u64>("seed", None).unwrap(), Some(42));
        assert_eq!(cfg.merge_str_opt("shots", None).as_deref(), Some("few"));
        assert!(cfg.get_bool("minute_precision"));
        // flags win
        assert_eq!(cfg.merge::<u64>("seed", Some(7)).unwrap(), Some(7));
    }

    #[test]
    fn rejects_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "just a line\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());
    }
}
