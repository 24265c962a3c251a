//! Content-addressed storage of query results.
//!
//! A result lives at `results/query_<hash>.json`, where the hash covers the
//! canonical query text and the effective configuration, so rerunning a query
//! finds its earlier result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, io_err};
use crate::query::QueryResult;

pub fn result_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("query_{hash}.json"))
}

/// Pretty JSON with a trailing newline, the on-disk form of a result.
pub fn result_json(result: &QueryResult) -> String {
    serde_json::to_string_pretty(result).expect("query results serialize") + "\n"
}

/// Writes `result` under `dir`, creating it if needed.
pub fn save_result(dir: &Path, result: &QueryResult) -> Result<PathBuf, IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = result_path(dir, &result.hash);
    std::fs::write(&path, result_json(result)).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// The stored result for `hash`, if any.
pub fn load_result(dir: &Path, hash: &str) -> Result<Option<QueryResult>, IngestError> {
    let path = result_path(dir, hash);
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| io_err(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub hash: String,
    pub query: String,
    pub window_count: usize,
    pub file: String,
}

/// Index of stored results ordered by file name. Unreadable files are
/// skipped.
pub fn list_results(dir: &Path) -> Result<Vec<ResultEntry>, IngestError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("query_") && n.ends_with(".json"))
        .collect();
    names.sort();
    let mut out = Vec::new();
    for name in names {
        let Ok(text) = std::fs::read_to_string(dir.join(&name)) else { continue };
        let Ok(r) = serde_json::from_str::<QueryResult>(&text) else { continue };
        out.push(ResultEntry { hash: r.hash, query: r.query, window_count: r.windows.len(), file: name });
    }
    Ok(out)
}
