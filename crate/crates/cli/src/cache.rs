//! Content-addressed store of JSON result records.
//!
//! A record lives at `<root>/<first two hex digits>/<hash>.json`, where the
//! hash is the SHA-256 of the canonical JSON of its key. Writes go through a
//! temporary file in the same directory followed by a rename, so readers
//! never see partial records and concurrent writers of the same key are
//! harmless.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

const TEMP_PREFIX: &str = ".tmp-";

/// Hex SHA-256 of the canonical (sorted-key, compact) JSON of `key`.
pub fn scenario_hash(key: &Value) -> String {
    let bytes = serde_json::to_vec(key).expect("JSON values always serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct GcReport {
    pub kept: usize,
    pub removed_temp: usize,
    pub removed_corrupt: usize,
    pub removed_old: usize,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, hash: &str) -> PathBuf {
        self.root.join(&hash[..2]).join(format!("{hash}.json"))
    }

    /// Raw bytes of a stored record.
    pub fn get(&self, hash: &str) -> Option<Vec<u8>> {
        fs::read(self.path_of(hash)).ok()
    }

    /// Stores `bytes` under `hash` atomically and returns the path.
    pub fn put(&self, hash: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path_of(hash);
        let dir = path.parent().unwrap();
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut tmp = tempfile::Builder::new()
            .prefix(TEMP_PREFIX)
            .tempfile_in(dir)
            .map_err(|e| CliError::io(dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
        Ok(path)
    }

    /// Returns the stored record for `key`, computing and storing it first
    /// when absent. `compute` receives the hash.
    pub fn get_or_insert_with(&self, key: &Value, compute: impl FnOnce(&str) -> Result<Value>) -> Result<(Vec<u8>, bool)> {
        let hash = scenario_hash(key);
        if let Some(bytes) = self.get(&hash) {
            if serde_json::from_slice::<Value>(&bytes).is_ok() {
                return Ok((bytes, true));
            }
        }
        let record = compute(&hash)?;
        let mut bytes = serde_json::to_vec_pretty(&record).map_err(|e| CliError::Record(e.to_string()))?;
        bytes.push(b'\n');
        self.put(&hash, &bytes)?;
        Ok((bytes, false))
    }

    /// Removes leftover temporary files, unparsable records and, when
    /// `max_age` is given, records older than that.
    pub fn gc(&self, max_age: Option<Duration>) -> Result<GcReport> {
        let mut report = GcReport::default();
        let Ok(shards) = fs::read_dir(&self.root) else {
            return Ok(report);
        };
        let now = SystemTime::now();
        for shard in shards {
            let shard = shard.map_err(|e| CliError::io(&self.root, e))?.path();
            if !shard.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&shard).map_err(|e| CliError::io(&shard, e))? {
                let path = entry.map_err(|e| CliError::io(&shard, e))?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
                let remove = if name.starts_with(TEMP_PREFIX) {
                    report.removed_temp += 1;
                    true
                } else if fs::read(&path)
                    .ok()
                    .and_then(|b| serde_json::from_slice::<Value>(&b).ok())
                    .is_none()
                {
                    report.removed_corrupt += 1;
                    true
                } else if max_age.is_some_and(|m| older_than(&path, now, m)) {
                    report.removed_old += 1;
                    true
                } else {
                    report.kept += 1;
                    false
                };
                if remove {
                    fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
                }
            }
            if fs::read_dir(&shard).map(|mut d| d.next().is_none()).unwrap_or(false) {
                let _ = fs::remove_dir(&shard);
            }
        }
        Ok(report)
    }
}

fn older_than(path: &Path, now: SystemTime, max_age: Duration) -> bool {
    fs::metadata(path)
        .and_then(|m| m.modified())
        .map(|t| now.duration_since(t).unwrap_or_default() > max_age)
        .unwrap_or(false)
}
