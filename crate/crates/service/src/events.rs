//! Append-only JSONL event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use crowdqc_core::prequal::{GateFailure, QualificationTag, WorkerProfile};
use crowdqc_core::realtime::{CandidateResponse, Decision};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    WorkerRegistered {
        at: DateTime<Utc>,
        profile: WorkerProfile,
        accepted: bool,
        reasons: Vec<GateFailure>,
        qualifications: Vec<QualificationTag>,
    },
    Validated {
        at: DateTime<Utc>,
        response: CandidateResponse,
        decision: Decision,
        validity: f64,
        /// Congruent n-grams; kept server-side only.
        shared: Vec<String>,
        /// The backend failed and the response was accepted for review.
        degraded: bool,
    },
    Submitted {
        at: DateTime<Utc>,
        receipt_id: String,
        response: CandidateResponse,
    },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path}, line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) the log for appending.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(EventLog {
            path: path.to_owned(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event as a single line and flushes it.
    pub fn append(&mut self, event: &Event) -> Result<(), LogError> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| LogError::Io {
                path: self.path.display().to_string(),
                source,
            })
    }

    pub fn sync(&self) -> Result<(), LogError> {
        self.file.sync_all().map_err(|source| LogError::Io {
            path: self.path.display().to_string(),
            source,
        })
    }
}

/// Reads every event in file order. A missing file is an empty log.
pub fn read_events(path: &Path) -> Result<Vec<Event>, LogError> {
    let shown = path.display().to_string();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(LogError::Io { path: shown, source }),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}
