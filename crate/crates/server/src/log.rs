//! Append-only JSONL ballot log with a single writer.
//!
//! A record is acknowledged only after its line has been written and
//! `fsync`ed. On open, a trailing partial line (a write interrupted by a
//! crash, never acknowledged) is cut off; any other unparsable line is an
//! error.

use srss_core::BallotRecord;
use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line} is corrupt: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("voter `{voter_id}` already has a ballot for set `{set_id}`")]
    Duplicate { voter_id: String, set_id: String },
}

struct Inner {
    file: File,
    len: u64,
    records: Vec<BallotRecord>,
    keys: HashSet<(String, String)>,
}

pub struct BallotLog {
    path: PathBuf,
    inner: Mutex<Inner>,
}

fn key(r: &BallotRecord) -> (String, String) {
    (r.ballot.voter_id.clone(), r.ballot.set_id.clone())
}

impl BallotLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        let io = |source| LogError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io)?;

        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            tracing::warn!(
                path = %path.display(),
                bytes = text.len() - complete,
                "dropping unacknowledged partial record at end of ballot log"
            );
            file.set_len(complete as u64).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        let mut records = Vec::new();
        let mut keys = HashSet::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: BallotRecord = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            keys.insert(key(&rec));
            records.push(rec);
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(BallotLog {
            path,
            inner: Mutex::new(Inner {
                file,
                len: complete as u64,
                records,
                keys,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs one record. Blocking; call from a blocking context.
    pub fn append(&self, record: BallotRecord) -> Result<(), LogError> {
        let mut inner = self.inner.lock().expect("ballot log mutex poisoned");
        let k = key(&record);
        if inner.keys.contains(&k) {
            return Err(LogError::Duplicate {
                voter_id: k.0,
                set_id: k.1,
            });
        }
        let mut line = serde_json::to_vec(&record).expect("ballot record serializes");
        line.push(b'\n');
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        let start = inner.len;
        let written = inner
            .file
            .write_all(&line)
            .and_then(|_| inner.file.sync_data());
        if let Err(e) = written {
            // best effort: drop whatever part of the line made it out
            let _ = inner.file.set_len(start);
            return Err(io(e));
        }
        inner.len += line.len() as u64;
        inner.keys.insert(k);
        inner.records.push(record);
        Ok(())
    }

    pub fn contains(&self, voter_id: &str, set_id: &str) -> bool {
        let inner = self.inner.lock().expect("ballot log mutex poisoned");
        inner
            .keys
            .contains(&(voter_id.to_string(), set_id.to_string()))
    }

    /// Copy of all records, in append order.
    pub fn snapshot(&self) -> Vec<BallotRecord> {
        self.inner
            .lock()
            .expect("ballot log mutex poisoned")
            .records
            .clone()
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .expect("ballot log mutex poisoned")
            .records
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw JSONL bytes of every acknowledged record.
    pub fn export(&self) -> Result<Vec<u8>, LogError> {
        let inner = self.inner.lock().expect("ballot log mutex poisoned");
        let mut bytes = std::fs::read(&self.path).map_err(|source| LogError::Io {
            path: self.path.clone(),
            source,
        })?;
        bytes.truncate(inner.len as usize);
        Ok(bytes)
    }

    pub fn sync(&self) -> Result<(), LogError> {
        let inner = self.inner.lock().expect("ballot log mutex poisoned");
        inner.file.sync_all().map_err(|source| LogError::Io {
            path: self.path.clone(),
            source,
        })
    }
}
