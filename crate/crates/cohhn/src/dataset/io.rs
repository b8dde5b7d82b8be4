//! On-disk layout of a preprocessed dataset.
//!
//! A dataset directory holds `catalog.json` plus `train.jsonl`,
//! `valid.jsonl`, and `test.jsonl`. Each `.jsonl` line is one session
//! as a JSON array of catalog indices, e.g. `[4,17,3]`.

use std::fs;
use std::path::Path;

use super::{ItemCatalog, Session, SplitDataset};
use crate::error::DataError;

const CATALOG_FILE: &str = "catalog.json";
const SPLIT_FILES: [(&str, fn(&SplitDataset) -> &Vec<Session>); 3] = [
    ("train.jsonl", |s| &s.train),
    ("valid.jsonl", |s| &s.valid),
    ("test.jsonl", |s| &s.test),
];

/// Write `catalog.json` and the three session files into `dir`,
/// creating it if needed. Output is deterministic for identical input.
pub fn save_dataset(dir: &Path, catalog: &ItemCatalog, split: &SplitDataset) -> Result<(), DataError> {
    let write_err = |path: &Path, source: std::io::Error| DataError::Write {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;

    let catalog_path = dir.join(CATALOG_FILE);
    let mut body = serde_json::to_string_pretty(catalog).expect("catalog serializes");
    body.push('\n');
    fs::write(&catalog_path, body).map_err(|e| write_err(&catalog_path, e))?;

    for (name, select) in SPLIT_FILES {
        let path = dir.join(name);
        let mut lines = String::new();
        for session in select(split) {
            lines.push_str(&serde_json::to_string(session).expect("session serializes"));
            lines.push('\n');
        }
        fs::write(&path, lines).map_err(|e| write_err(&path, e))?;
    }
    Ok(())
}

/// Read a dataset directory produced by [`save_dataset`]. Every item
/// index is validated against the catalog, and each session must keep
/// at least two items.
pub fn load_dataset(dir: &Path) -> Result<(ItemCatalog, SplitDataset), DataError> {
    let catalog_path = dir.join(CATALOG_FILE);
    let read_err = |path: &Path, source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let body = fs::read_to_string(&catalog_path).map_err(|e| read_err(&catalog_path, e))?;
    let catalog: ItemCatalog = serde_json::from_str(&body).map_err(|e| DataError::Format {
        path: catalog_path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut parts: Vec<Vec<Session>> = Vec::new();
    for (name, _) in SPLIT_FILES {
        let path = dir.join(name);
        let body = fs::read_to_string(&path).map_err(|e| read_err(&path, e))?;
        let mut sessions = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let items: Vec<usize> =
                serde_json::from_str(line).map_err(|e| DataError::Format {
                    path: path.display().to_string(),
                    message: format!("line {}: {}", i + 1, e),
                })?;
            if items.len() < 2 {
                return Err(DataError::Format {
                    path: path.display().to_string(),
                    message: format!("line {}: session has fewer than 2 items", i + 1),
                });
            }
            if let Some(&bad) = items.iter().find(|&&idx| idx >= catalog.len()) {
                return Err(DataError::UnknownItemIndex(bad));
            }
            sessions.push(Session::new(items));
        }
        parts.push(sessions);
    }
    let test = parts.pop().expect("three parts");
    let valid = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok((catalog, SplitDataset { train, valid, test }))
}
