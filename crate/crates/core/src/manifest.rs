//! JSONL corpus manifests: one record per script, one manifest per stage
//! directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::CanonReport;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: duplicate id `{id}`")]
    DuplicateId { path: PathBuf, id: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    /// Relative to the manifest's directory; empty for rejected rows
    /// without an artifact.
    pub path: String,
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canon_report: Option<CanonReport>,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Id of the record this one was derived from in the previous stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Record {
    pub fn accepted(id: impl Into<String>, path: impl Into<String>, stage: &str) -> Record {
        Record {
            id: id.into(),
            path: path.into(),
            stage: stage.into(),
            canon_report: None,
            valid: true,
            reject_reason: None,
            tag: None,
            source: None,
        }
    }

    pub fn rejected(id: impl Into<String>, stage: &str, reason: impl Into<String>) -> Record {
        Record {
            valid: false,
            reject_reason: Some(reason.into()),
            ..Record::accepted(id, "", stage)
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Record {
        self.source = Some(source.into());
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Record {
        self.tag = Some(tag.into());
        self
    }
}

pub fn to_jsonl(records: &[Record]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

pub fn read(path: &Path) -> Result<Vec<Record>, ManifestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out: Vec<Record> = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let r: Record = serde_json::from_str(line).map_err(|source| ManifestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        if out.iter().any(|o| o.id == r.id) {
            return Err(ManifestError::DuplicateId {
                path: path.to_path_buf(),
                id: r.id,
            });
        }
        out.push(r);
    }
    Ok(out)
}

/// Writes `bytes` unless the file already holds exactly them. Returns
/// whether anything was written.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool, ManifestError> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(false);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(true)
}

pub fn write(dir: &Path, records: &[Record]) -> Result<bool, ManifestError> {
    write_if_changed(&dir.join(MANIFEST_FILE), to_jsonl(records).as_bytes())
}

/// A script to process: its record and the file holding it.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub record: Record,
    pub file: PathBuf,
}

/// Valid entries of a stage directory. Without a manifest every `*.mcq`
/// and `*.stl` file is an entry, ids being file stems in sorted order; of
/// two files with the same stem the script wins.
pub fn load_stage(dir: &Path) -> Result<Vec<Entry>, ManifestError> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        return Ok(read(&manifest)?
            .into_iter()
            .filter(|r| r.valid && !r.path.is_empty())
            .map(|r| Entry {
                file: dir.join(&r.path),
                record: r,
            })
            .collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "mcq" || e == "stl"))
        .collect();
    files.sort();
    let mut out: Vec<Entry> = Vec::new();
    for f in files {
        let id = f
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        if out.last().is_some_and(|e| e.record.id == id) {
            continue;
        }
        let name = f
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        out.push(Entry {
            record: Record::accepted(id, name, "input"),
            file: f,
        });
    }
    Ok(out)
}
