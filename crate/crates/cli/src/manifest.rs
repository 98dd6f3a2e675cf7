//! Run manifest: per step, the hashes of inputs, parameters and artifacts.
//! A step whose recorded hashes still match is skipped unless forced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub params_hash: String,
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub steps: BTreeMap<String, StepRecord>,
}

/// Hex SHA-256 of a file, or of every file below a directory (sorted by
/// relative path, names included).
pub fn hash_path(path: &Path) -> CliResult<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update(read(&path.join(&rel))?);
        }
    } else {
        hasher.update(read(path)?);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("cannot list {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::data(e.to_string()))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("below root").to_path_buf());
        }
    }
    Ok(())
}

pub fn hash_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

impl Manifest {
    pub fn load(out_dir: &Path) -> CliResult<Self> {
        let path = out_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest {
                version: env!("CARGO_PKG_VERSION").into(),
                steps: BTreeMap::new(),
            });
        }
        let raw = fs::read_to_string(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, out_dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        crate::pipeline::write_file(&out_dir.join(MANIFEST_FILE), json.as_bytes())
    }

    /// Is `step` recorded with these parameters and unchanged inputs and
    /// artifacts?
    pub fn is_current(&self, step: &str, params_hash: &str, inputs: &BTreeMap<String, PathBuf>, out_dir: &Path) -> bool {
        let Some(rec) = self.steps.get(step) else {
            return false;
        };
        if rec.params_hash != params_hash || rec.inputs.len() != inputs.len() {
            return false;
        }
        let same = |recorded: &BTreeMap<String, String>, path_of: &dyn Fn(&str) -> PathBuf| {
            recorded
                .iter()
                .all(|(name, hash)| hash_path(&path_of(name)).map(|h| &h == hash).unwrap_or(false))
        };
        let input_path = |name: &str| inputs.get(name).cloned().unwrap_or_default();
        same(&rec.inputs, &input_path) && same(&rec.artifacts, &|name: &str| out_dir.join(name))
    }
}
