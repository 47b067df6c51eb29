//! `manifest.json`: provenance of every run directory. It is written before
//! any other artifact and rewritten with file hashes once the run finishes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dsmstcn_core::data::Scenario;

use crate::error::{Error, Result};

pub const FILE_NAME: &str = "manifest.json";
pub const FORMAT: &str = "dsmstcn-manifest-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

/// Isolated repetition inside background, labeled "others" in both tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfuserEntry {
    pub micro_class: usize,
    pub start_sample: usize,
    pub end_sample_exclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub id: String,
    pub subject: String,
    pub scenario: Scenario,
    pub samples: usize,
    pub signal: String,
    pub annotations: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confusers: Vec<ConfuserEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recordings: Vec<RecordingEntry>,
    #[serde(default)]
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON encoding of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<(String, serde_json::Value)> {
    let value = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| Error::Config(e.to_string()))?;
    Ok((sha256_hex(&bytes), value))
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seeds: BTreeMap<String, u64>) -> Result<Self> {
        let (config_hash, config) = config_hash(config)?;
        Ok(Manifest {
            format: FORMAT.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash,
            seeds,
            config,
            complete: false,
            recordings: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        bytes.push(b'\n');
        super::write_file(&dir.join(FILE_NAME), &bytes)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        let text = super::read_text(&path)?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: path.clone(), line: e.line(), message: e.to_string() })?;
        if m.format != FORMAT {
            return Err(Error::Parse { path, line: 1, message: format!("unknown manifest format {:?}", m.format) });
        }
        Ok(m)
    }

    /// Hashes every listed relative path under `dir`, sorted by path.
    pub fn record_files(&mut self, dir: &Path, paths: impl IntoIterator<Item = String>) -> Result<()> {
        let mut files = Vec::new();
        for p in paths {
            let bytes = super::read_file(&dir.join(&p))?;
            files.push(FileEntry { sha256: sha256_hex(&bytes), path: p });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files = files;
        Ok(())
    }

    /// Checks every listed file against its hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = dir.join(&f.path);
            if sha256_hex(&super::read_file(&path)?) != f.sha256 {
                return Err(Error::Parse { path, line: 0, message: "content does not match manifest hash".into() });
            }
        }
        Ok(())
    }
}
