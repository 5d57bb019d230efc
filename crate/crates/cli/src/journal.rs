//! Append-only JSON-lines journal of completed scan points. A rerun with
//! the same key skips every point already recorded.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A per-point result that survives serialisation; errors keep only their
/// message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome<T> {
    Ok(T),
    Err(String),
}

impl<T> From<mmgate_core::Result<T>> for Outcome<T> {
    fn from(r: mmgate_core::Result<T>) -> Self {
        match r {
            Ok(x) => Outcome::Ok(x),
            Err(e) => Outcome::Err(e.to_string()),
        }
    }
}

impl<T> Outcome<T> {
    pub fn into_result(self) -> mmgate_core::Result<T> {
        match self {
            Outcome::Ok(x) => Ok(x),
            Outcome::Err(msg) => Err(mmgate_core::Error::Numerical(msg)),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    journal: String,
    key: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Entry<T> {
    index: usize,
    row: T,
}

const KIND: &str = "mmgate-scan";

pub struct Journal<T> {
    path: PathBuf,
    file: File,
    done: BTreeMap<usize, T>,
}

impl<T: Serialize + DeserializeOwned> Journal<T> {
    /// Opens `path`, keeping its entries when its header matches `key` and
    /// starting afresh otherwise. A torn final line is discarded.
    pub fn open(path: &Path, key: serde_json::Value) -> Result<Self, CliError> {
        let io = |e| CliError::io(path, e);
        let header = Header {
            journal: KIND.into(),
            key,
        };
        let mut done = BTreeMap::new();
        let mut kept = Vec::new();
        let existing = fs::read_to_string(path).ok();
        if let Some(text) = &existing {
            let mut lines = text.lines();
            let matches = lines
                .next()
                .and_then(|l| serde_json::from_str::<Header>(l).ok())
                .is_some_and(|h| h.journal == KIND && h.key == header.key);
            if matches {
                for line in lines {
                    match serde_json::from_str::<Entry<T>>(line) {
                        Ok(entry) => {
                            done.insert(entry.index, entry.row);
                            kept.push(line);
                        }
                        Err(_) => break,
                    }
                }
            }
        }
        let mut text = serde_json::to_string(&header).map_err(|e| io(std::io::Error::other(e)))?;
        text.push('\n');
        for line in kept {
            text.push_str(line);
            text.push('\n');
        }
        fs::write(path, text).map_err(io)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            done,
        })
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.done.get(&index)
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    /// Appends completed points and flushes them to disk.
    pub fn record(&mut self, rows: Vec<(usize, T)>) -> Result<(), CliError> {
        let io = |e| CliError::io(&self.path, e);
        let mut text = String::new();
        for (index, row) in &rows {
            let line = serde_json::to_string(&Entry { index: *index, row })
                .map_err(|e| io(std::io::Error::other(e)))?;
            text.push_str(&line);
            text.push('\n');
        }
        self.file.write_all(text.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.done.extend(rows);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn entries_survive_reopening_with_the_same_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let mut j = Journal::<f64>::open(&path, json!({"a": 1})).unwrap();
        j.record(vec![(0, 0.1), (2, 1.0 / 3.0)]).unwrap();
        drop(j);
        let j = Journal::<f64>::open(&path, json!({"a": 1})).unwrap();
        assert_eq!(j.len(), 2);
        assert_eq!(j.get(2), Some(&(1.0 / 3.0)));
        assert_eq!(j.get(1), None);
    }

    #[test]
    fn a_new_key_starts_afresh() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let mut j = Journal::<f64>::open(&path, json!(1)).unwrap();
        j.record(vec![(0, 1.0)]).unwrap();
        drop(j);
        assert!(Journal::<f64>::open(&path, json!(2)).unwrap().is_empty());
    }

    #[test]
    fn a_torn_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let mut j = Journal::<f64>::open(&path, json!(1)).unwrap();
        j.record(vec![(0, 1.0), (1, 2.0)]).unwrap();
        drop(j);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"index\": 2, \"ro");
        fs::write(&path, text).unwrap();
        let mut j = Journal::<f64>::open(&path, json!(1)).unwrap();
        assert_eq!(j.len(), 2);
        j.record(vec![(2, 3.0)]).unwrap();
        drop(j);
        assert_eq!(Journal::<f64>::open(&path, json!(1)).unwrap().len(), 3);
    }

    #[test]
    fn outcomes_keep_error_messages() {
        let r: mmgate_core::Result<f64> = Err(mmgate_core::Error::Infeasible("x".into()));
        let o = Outcome::from(r);
        let text = serde_json::to_string(&o).unwrap();
        let back: Outcome<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, o);
        assert!(back.into_result().unwrap_err().to_string().contains("infeasible design: x"));
    }
}
