//! Session transcripts and their daily newline-delimited JSON log.
//!
//! Each log line is one [`TranscriptEntry`] object:
//!
//! | field        | type            | meaning                                                  |
//! |--------------|-----------------|----------------------------------------------------------|
//! | `session_id` | string          | portal session                                           |
//! | `index`      | integer         | position in the session transcript, from 0               |
//! | `kind`       | string          | `greeting`, `user`, `system` or `expired`                |
//! | `agent`      | string          | agent holding the floor (addressed, for user entries)    |
//! | `text`       | string          | what was said                                            |
//! | `acts`       | array           | system dialog acts, omitted when empty                   |
//! | `reports`    | array           | remote sessions that ended with this entry, when any     |
//! | `timestamp`  | string          | RFC 3339, UTC                                            |
//!
//! Log files are named `transcript-YYYY-MM-DD.ndjson` after the entry's UTC date.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::act::Act;
use crate::engine::RemoteRecord;
use crate::protocol::DialogReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Greeting,
    User,
    System,
    /// The portal closed the session after it sat idle.
    Expired,
}

/// A remote session's report, as embedded in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedReport {
    pub agent: String,
    /// Portal turn on which the remote session ended.
    pub turn: u32,
    pub report: DialogReport,
}

impl From<&RemoteRecord> for EmbeddedReport {
    fn from(r: &RemoteRecord) -> Self {
        EmbeddedReport {
            agent: r.concept.clone(),
            turn: r.turn,
            report: r.report.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub session_id: String,
    pub index: usize,
    pub kind: EntryKind,
    pub agent: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub acts: Vec<Act>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<EmbeddedReport>,
    pub timestamp: DateTime<Utc>,
}

/// Append-only log, one file per UTC day. Writes from all sessions are
/// serialized through one lock.
pub struct TranscriptLog {
    dir: PathBuf,
    current: Mutex<Option<(NaiveDate, File)>>,
}

impl TranscriptLog {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(TranscriptLog {
            dir,
            current: Mutex::new(None),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, day: NaiveDate) -> PathBuf {
        self.dir.join(format!("transcript-{}.ndjson", day.format("%Y-%m-%d")))
    }

    pub fn append(&self, entries: &[TranscriptEntry]) -> io::Result<()> {
        let mut current = self.current.lock().unwrap_or_else(|e| e.into_inner());
        for entry in entries {
            let day = entry.timestamp.date_naive();
            if current.as_ref().is_none_or(|(d, _)| *d != day) {
                let file = OpenOptions::new().create(true).append(true).open(self.path_for(day))?;
                *current = Some((day, file));
            }
            let (_, file) = current.as_mut().expect("opened above");
            let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        if let Some((_, file)) = current.as_mut() {
            file.flush()?;
        }
        Ok(())
    }
}

/// Reads one log file back.
pub fn read_log(path: impl AsRef<Path>) -> io::Result<Vec<TranscriptEntry>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}
