//! Append-only JSON-lines journals.
//!
//! A crash can leave a partial final line; it is dropped on open and the file
//! is cut back to the last complete line. A bad line anywhere else is
//! reported as corruption with its line number.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RunResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry<V> {
    pub key: String,
    pub request_digest: String,
    pub value: V,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Parses every complete line; returns the values and the byte length of the
/// valid prefix.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, u64)> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let (line, next, complete) = match bytes[offset..].iter().position(|b| *b == b'\n') {
            Some(p) => (&bytes[offset..offset + p], offset + p + 1, true),
            None => (&bytes[offset..], bytes.len(), false),
        };
        if line.iter().all(u8::is_ascii_whitespace) {
            offset = next;
            continue;
        }
        // an unterminated tail is an interrupted write, even if it parses
        if !complete {
            tracing::warn!(path = %path.display(), line = line_no, "dropping truncated journal tail");
            return Ok((out, offset as u64));
        }
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<T>(s).map_err(|e| e.to_string()));
        match parsed {
            Ok(v) => out.push(v),
            Err(message) => {
                return Err(Error::CacheCorruption {
                    path: path.to_owned(),
                    line: line_no,
                    message,
                })
            }
        }
        offset = next;
    }
    Ok((out, offset as u64))
}

fn open_append(path: &Path, valid_len: u64) -> Result<File> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len > valid_len {
        file.set_len(valid_len).map_err(|e| Error::io(path, e))?;
    }
    Ok(file)
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value).map_err(|e| Error::Computation(e.to_string()))?;
    line.push(b'\n');
    file.write_all(&line).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

struct Inner<V> {
    map: HashMap<String, V>,
    file: File,
}

/// Key/value cache backed by one journal file. Writes are serialized through
/// a mutex; the in-memory index answers reads.
pub struct Journal<V> {
    path: PathBuf,
    inner: Mutex<Inner<V>>,
    _marker: PhantomData<V>,
}

impl<V: Serialize + DeserializeOwned + Clone> Journal<V> {
    /// Opens (creating if needed) `dir/name.jsonl` and replays it.
    pub fn open(dir: &Path, name: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{name}.jsonl"));
        let (entries, valid_len) = read_jsonl::<JournalEntry<V>>(&path)?;
        let file = open_append(&path, valid_len)?;
        let mut map = HashMap::with_capacity(entries.len());
        for e in entries {
            map.entry(e.key).or_insert(e.value);
        }
        Ok(Journal {
            path,
            inner: Mutex::new(Inner { map, file }),
            _marker: PhantomData,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.lock().map.get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends an entry unless the key is already present.
    pub fn insert(&self, key: &str, request_digest: &str, value: V, meta: serde_json::Value) -> Result<()> {
        let mut inner = self.lock();
        if inner.map.contains_key(key) {
            return Ok(());
        }
        let entry = JournalEntry {
            key: key.to_owned(),
            request_digest: request_digest.to_owned(),
            value,
            meta,
        };
        append_line(&mut inner.file, &self.path, &entry)?;
        inner.map.insert(entry.key, entry.value);
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner<V>> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Append-only log of run results.
pub(crate) struct ResultLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl ResultLog {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let (_, valid_len) = read_jsonl::<RunResult>(path)?;
        Ok(ResultLog {
            path: path.to_owned(),
            file: Mutex::new(open_append(path, valid_len)?),
        })
    }

    pub(crate) fn append(&self, result: &RunResult) -> Result<()> {
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        append_line(&mut f, &self.path, result)
    }
}

/// Replays a results journal, ignoring a truncated final line.
pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    Ok(read_jsonl(path)?.0)
}
