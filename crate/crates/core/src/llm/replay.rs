use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

use super::{ChatBackend, ChatRequest, ChatResponse, Clock};

/// One line of the append-only replay log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request_hash: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    pub ts: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayLog {
    clock: Clock,
    entries: Vec<ReplayEntry>,
}

impl ReplayLog {
    pub fn new(clock: Clock) -> Self {
        ReplayLog {
            clock,
            entries: Vec::new(),
        }
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn record(&mut self, request: ChatRequest, response: ChatResponse) {
        let ts = match self.clock {
            Clock::Logical => self.entries.len() as u64,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        self.entries.push(ReplayEntry {
            request_hash: request.hash(),
            request,
            response,
            ts,
        });
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }

    pub fn to_jsonl(entries: &[ReplayEntry]) -> String {
        let mut out = String::new();
        for e in entries {
            out.push_str(&serde_json::to_string(e).expect("replay entry serializes"));
            out.push('\n');
        }
        out
    }

    /// Appends this log's entries to `path`.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.write_all(Self::to_jsonl(&self.entries).as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<ReplayEntry>> {
        let text = util::read_to_string(path)?;
        let mut offset = 0;
        let mut out = Vec::new();
        for line in text.split_inclusive('\n') {
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                    offset,
                    detail: e.to_string(),
                })?);
            }
            offset += line.len();
        }
        Ok(out)
    }
}

/// Serves responses recorded in a prior replay log, keyed by request hash.
/// Repeated identical requests are answered in recorded order.
pub struct ReplayChat {
    responses: Mutex<HashMap<String, VecDeque<ChatResponse>>>,
}

impl ReplayChat {
    pub fn new(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let mut responses: HashMap<String, VecDeque<ChatResponse>> = HashMap::new();
        for e in entries {
            responses.entry(e.request_hash).or_default().push_back(e.response);
        }
        ReplayChat {
            responses: Mutex::new(responses),
        }
    }

    /// `path` is one log, or a run directory whose `*replay.jsonl` files
    /// are all loaded in path order.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_dir() {
            return Ok(Self::new(ReplayLog::read_jsonl(path)?));
        }
        let mut files = Vec::new();
        collect_logs(path, &mut files)?;
        files.sort();
        let mut entries = Vec::new();
        for f in &files {
            entries.extend(ReplayLog::read_jsonl(f)?);
        }
        Ok(Self::new(entries))
    }
}

fn collect_logs(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in read {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_logs(&path, out)?;
        } else if path.to_string_lossy().ends_with("replay.jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

impl ChatBackend for ReplayChat {
    fn id(&self) -> String {
        "replay".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let hash = request.hash();
        self.responses
            .lock()
            .expect("replay state poisoned")
            .get_mut(&hash)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| {
                Error::Protocol(format!("no recorded response for request {hash} (`{}`)", request.tag))
            })
    }
}
