//! File layout of a run directory, provenance sidecars and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn articles(&self) -> PathBuf {
        self.root.join("articles.jsonl")
    }
    pub fn ingest_stats(&self) -> PathBuf {
        self.root.join("ingest_stats.json")
    }
    pub fn records(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }
    pub fn review_rejects(&self) -> PathBuf {
        self.root.join("review_rejects.jsonl")
    }
    pub fn index(&self) -> PathBuf {
        self.root.join("index.bin")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn instances(&self) -> PathBuf {
        self.dataset().join("instances.jsonl")
    }
    pub fn split(&self) -> PathBuf {
        self.dataset().join("split.json")
    }
    pub fn train(&self) -> PathBuf {
        self.dataset().join("train.jsonl")
    }
    pub fn test(&self) -> PathBuf {
        self.dataset().join("test.jsonl")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn llm_log(&self) -> PathBuf {
        self.root.join("llm").join("llm_log.jsonl")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Provenance stored next to every text artifact as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub stage: String,
    pub config_hash: String,
    /// Hash recorded in the model file that produced a prediction set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_config_hash: Option<String>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::from_io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::from_io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_meta(path: &Path, meta: &Meta) -> Result<(), CliError> {
    write_json(&meta_path(path), meta)
}

pub fn read_meta(path: &Path) -> Result<Option<Meta>, CliError> {
    let p = meta_path(path);
    if !p.exists() {
        return Ok(None);
    }
    read_json(&p).map(Some)
}

pub fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path, what))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the run directory when inside it.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

fn describe(root: &Path, path: &Path) -> Result<OutputRecord, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::from_io(path, e))?;
    let shown = path.strip_prefix(root).unwrap_or(path);
    Ok(OutputRecord {
        path: shown.to_string_lossy().replace('\\', "/"),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Record a finished stage and its outputs in `manifest.json`.
pub fn record_stage(layout: &Layout, config_hash: &str, stage: &str, outputs: &[PathBuf]) -> Result<(), CliError> {
    let path = layout.manifest();
    let mut manifest: Manifest = if path.exists() { read_json(&path)? } else { Manifest::default() };
    manifest.config_hash = config_hash.to_string();
    let mut records = Vec::with_capacity(outputs.len());
    let mut sorted = outputs.to_vec();
    sorted.sort();
    for p in &sorted {
        records.push(describe(&layout.root, p)?);
    }
    manifest.stages.insert(
        stage.to_string(),
        StageRecord {
            config_hash: config_hash.to_string(),
            outputs: records,
        },
    );
    write_json(&path, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_sits_next_to_file() {
        assert_eq!(meta_path(Path::new("a/b/test.jsonl")), PathBuf::from("a/b/test.jsonl.meta.json"));
    }

    #[test]
    fn manifest_accumulates_stages() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        let f = dir.path().join("x.txt");
        write_text(&f, "abc").unwrap();
        record_stage(&layout, "h1", "one", &[f.clone()]).unwrap();
        record_stage(&layout, "h2", "two", &[f]).unwrap();
        let m: Manifest = read_json(&layout.manifest()).unwrap();
        assert_eq!(m.config_hash, "h2");
        assert_eq!(m.stages.len(), 2);
        let out = &m.stages["one"].outputs[0];
        assert_eq!((out.path.as_str(), out.bytes), ("x.txt", 3));
        assert_eq!(out.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
