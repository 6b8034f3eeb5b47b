//! Append-only event journal. One JSON object per line, each flushed to
//! disk before the caller proceeds; a graph change exists once its line is
//! durable. A torn final line (crash mid-write) is ignored on replay and
//! truncated on recovery.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::feedback::FeedbackRecord;
use super::RunError;
use crate::graph::VersionId;
use crate::vcs::Operation;

pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetireReason {
    Pruned,
    /// Head of a failed worker; nobody would extend it.
    Orphaned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Root {
        id: VersionId,
    },
    Node {
        id: VersionId,
        parents: Vec<VersionId>,
        agent: usize,
        round: usize,
        operation: Operation,
    },
    Rejected {
        agent: usize,
        round: usize,
        operation: Operation,
        reason: String,
    },
    /// The agent could not produce a proposal; the iteration was skipped.
    Skipped {
        agent: usize,
        round: usize,
        error: String,
    },
    WorkerFailed {
        agent: usize,
        round: usize,
        error: String,
    },
    Retire {
        id: VersionId,
        reason: RetireReason,
    },
    RoundDone {
        round: usize,
        frontier: usize,
        live_agents: usize,
    },
    Checkpoint {
        index: usize,
        round: usize,
        frontier: Vec<VersionId>,
        live_agents: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback: Option<FeedbackRecord>,
    },
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    durable: bool,
}

impl Journal {
    pub fn create(path: &Path, durable: bool) -> Result<Journal, RunError> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|e| RunError::io(path, e))?;
        Ok(Journal {
            path: path.to_path_buf(),
            file,
            durable,
        })
    }

    /// Opens for appending after dropping a torn trailing line.
    pub fn open(path: &Path, durable: bool) -> Result<(Journal, Vec<Event>), RunError> {
        let (events, valid_len) = read_events(path)?;
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .map_err(|e| RunError::io(path, e))?;
        let len = file.metadata().map_err(|e| RunError::io(path, e))?.len();
        if len != valid_len {
            log::warn!("{}: dropping {} bytes of torn journal tail", path.display(), len - valid_len);
            file.set_len(valid_len).map_err(|e| RunError::io(path, e))?;
            file.sync_all().map_err(|e| RunError::io(path, e))?;
        }
        file.seek(SeekFrom::End(0)).map_err(|e| RunError::io(path, e))?;
        Ok((
            Journal {
                path: path.to_path_buf(),
                file,
                durable,
            },
            events,
        ))
    }

    pub fn append(&mut self, event: &Event) -> Result<(), RunError> {
        let mut line = serde_json::to_string(event).map_err(|e| RunError::Journal(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(|e| RunError::io(&self.path, e))?;
        if self.durable {
            self.file.sync_data().map_err(|e| RunError::io(&self.path, e))?;
        }
        Ok(())
    }
}

/// Events up to the last complete line, and the byte length they span.
/// A malformed line that is not the last one is corruption, not a torn
/// write, and is reported as an error.
pub fn read_events(path: &Path) -> Result<(Vec<Event>, u64), RunError> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut valid = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| RunError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<Event>(buf.trim_end()) {
            Ok(ev) => {
                events.push(ev);
                valid += n as u64;
            }
            Err(e) => {
                let mut rest = String::new();
                reader.read_line(&mut rest).map_err(|e| RunError::io(path, e))?;
                if rest.is_empty() {
                    break;
                }
                return Err(RunError::Journal(format!("line {line_no}: {e}")));
            }
        }
    }
    Ok((events, valid))
}
