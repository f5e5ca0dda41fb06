//! Append-only session log, one JSON record per line. The replay backend
//! reads raw responses back out of it by (task, iteration).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogKind {
    TaskSubmitted,
    ProposalReceived,
    Accepted,
    Rejected,
    EvalRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub session: String,
    pub kind: LogKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u32>,
    #[serde(default)]
    pub payload: Value,
}

/// Payload of a `ProposalReceived` entry. Exactly one of `raw_response`
/// and `error` describes what the backend returned; a response that later
/// failed to parse keeps both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StageErrorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changeset: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageErrorRecord {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("session log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("session log {path}, line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct SessionLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
    last_timestamp: u64,
}

impl SessionLog {
    /// Opens (creating if needed) a log for appending. Existing entries are
    /// read so sequence numbers and timestamps keep increasing.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let existing = if path.exists() {
            read_log(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| LogError::Io {
                path: path.clone(),
                source,
            })?;
        let (next_seq, last_timestamp) = existing
            .last()
            .map(|e| (e.seq + 1, e.timestamp_ms))
            .unwrap_or((1, 0));
        Ok(SessionLog {
            path,
            file,
            next_seq,
            last_timestamp,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and syncs one entry before returning it.
    pub fn append(
        &mut self,
        session: &str,
        kind: LogKind,
        task: Option<&str>,
        iteration: Option<u32>,
        payload: Value,
    ) -> Result<LogEntry, LogError> {
        let timestamp_ms = now_ms().max(self.last_timestamp + 1);
        let entry = LogEntry {
            seq: self.next_seq,
            timestamp_ms,
            session: session.to_string(),
            kind,
            task: task.map(str::to_string),
            iteration,
            payload,
        };
        let mut line = serde_json::to_string(&entry).expect("log entry serializes");
        line.push('\n');
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(|source| LogError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.next_seq += 1;
        self.last_timestamp = timestamp_ms;
        Ok(entry)
    }
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, LogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordedResponse {
    Text(String),
    Failed(String),
}

/// Recorded backend answers indexed by (task, iteration). The first record
/// for a key wins.
#[derive(Debug, Clone, Default)]
pub struct ReplaySource {
    responses: HashMap<(String, u32), RecordedResponse>,
}

impl ReplaySource {
    pub fn get(&self, task: &str, iteration: u32) -> Option<&RecordedResponse> {
        self.responses.get(&(task.trim().to_string(), iteration))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn from_entries(entries: &[LogEntry]) -> Self {
        let mut responses = HashMap::new();
        for entry in entries {
            if entry.kind != LogKind::ProposalReceived {
                continue;
            }
            let (Some(task), Some(iteration)) = (&entry.task, entry.iteration) else {
                continue;
            };
            let Ok(record) = serde_json::from_value::<ProposalRecord>(entry.payload.clone()) else {
                continue;
            };
            let recorded = match (record.raw_response, record.error) {
                (Some(raw), _) => RecordedResponse::Text(raw),
                (None, Some(err)) => RecordedResponse::Failed(err.message),
                (None, None) => continue,
            };
            responses
                .entry((task.trim().to_string(), iteration))
                .or_insert(recorded);
        }
        ReplaySource { responses }
    }
}

pub fn load_replay(path: impl AsRef<Path>) -> Result<ReplaySource, LogError> {
    Ok(ReplaySource::from_entries(&read_log(path)?))
}
