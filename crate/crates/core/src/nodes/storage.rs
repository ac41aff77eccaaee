//! SD card storage and the bus-traffic log written to it.
//!
//! Log files are a plain concatenation of records:
//!
//! ```text
//! [timestamp:8 LE unix us][src:1][id:4 LE][len:1][payload:len]
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bus::{Frame, FrameId, IdWidth, NodeId, MAX_PAYLOAD};
use crate::ids;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StorageError {
    #[error("card full: {requested} bytes requested, {free} free")]
    SdFull { requested: usize, free: usize },
    #[error("no file named {0}")]
    NoSuchFile(String),
    #[error("truncated record at offset {offset}")]
    TruncatedRecord { offset: usize },
    #[error("bad record at offset {offset}: {reason}")]
    BadRecord { offset: usize, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdCard {
    capacity: usize,
    files: BTreeMap<String, Vec<u8>>,
}

impl SdCard {
    pub fn new(capacity: usize) -> Self {
        SdCard {
            capacity,
            files: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn used(&self) -> usize {
        self.files.values().map(Vec::len).sum()
    }

    pub fn free(&self) -> usize {
        self.capacity.saturating_sub(self.used())
    }

    /// Shrink the usable capacity to what is already stored.
    pub fn fill(&mut self) {
        self.capacity = self.used();
    }

    pub fn resize(&mut self, capacity: usize) {
        self.capacity = capacity.max(self.used());
    }

    pub fn append(&mut self, name: &str, data: &[u8]) -> Result<(), StorageError> {
        if data.len() > self.free() {
            return Err(StorageError::SdFull {
                requested: data.len(),
                free: self.free(),
            });
        }
        self.files.entry(name.to_string()).or_default().extend_from_slice(data);
        Ok(())
    }

    pub fn write(&mut self, name: &str, data: Vec<u8>) -> Result<(), StorageError> {
        let existing = self.files.get(name).map_or(0, Vec::len);
        let free = self.free() + existing;
        if data.len() > free {
            return Err(StorageError::SdFull {
                requested: data.len(),
                free,
            });
        }
        self.files.insert(name.to_string(), data);
        Ok(())
    }

    pub fn read(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn read_mut(&mut self, name: &str) -> Option<&mut Vec<u8>> {
        self.files.get_mut(name)
    }

    pub fn delete(&mut self, name: &str) -> Result<Vec<u8>, StorageError> {
        self.files
            .remove(name)
            .ok_or_else(|| StorageError::NoSuchFile(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.files.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }
}

pub fn log_file_name(seq: u32) -> String {
    format!("LOG{seq}.BIN")
}

/// Sequence number of a `LOG<seq>.BIN` name, ignoring any archive suffix.
pub fn log_file_seq(name: &str) -> Option<u32> {
    name.strip_prefix("LOG")?.split_once(".BIN")?.0.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub timestamp_us: u64,
    pub frame: Frame,
}

const RECORD_HEADER: usize = 14;
const EXTENDED_FLAG: u32 = 1 << 31;

impl LogRecord {
    /// The id field carries extended identifiers with bit 31 set.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let id = self.frame.id();
        let raw = match id.width() {
            IdWidth::Standard11 => id.value(),
            IdWidth::Extended29 => id.value() | EXTENDED_FLAG,
        };
        out.extend_from_slice(&self.timestamp_us.to_le_bytes());
        out.push(self.frame.source().0);
        out.extend_from_slice(&raw.to_le_bytes());
        out.push(self.frame.payload().len() as u8);
        out.extend_from_slice(self.frame.payload());
    }

    pub fn encoded_len(&self) -> usize {
        RECORD_HEADER + self.frame.payload().len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut v);
        v
    }
}

/// Decode a whole log file. On a short tail the records decoded so far are
/// returned alongside the error.
pub fn decode_log(bytes: &[u8]) -> (Vec<LogRecord>, Option<StorageError>) {
    let mut out = Vec::new();
    let mut off = 0;
    while off < bytes.len() {
        if bytes.len() - off < RECORD_HEADER {
            return (out, Some(StorageError::TruncatedRecord { offset: off }));
        }
        let h = &bytes[off..off + RECORD_HEADER];
        let ts = u64::from_le_bytes(h[0..8].try_into().unwrap());
        let src = NodeId(h[8]);
        let raw = u32::from_le_bytes(h[9..13].try_into().unwrap());
        let len = h[13] as usize;
        if len > MAX_PAYLOAD {
            return (
                out,
                Some(StorageError::BadRecord {
                    offset: off,
                    reason: "payload length over 8",
                }),
            );
        }
        if bytes.len() - off - RECORD_HEADER < len {
            return (out, Some(StorageError::TruncatedRecord { offset: off }));
        }
        let id = if raw & EXTENDED_FLAG != 0 {
            FrameId::extended(raw & !EXTENDED_FLAG)
        } else {
            FrameId::standard(raw)
        };
        let Ok(id) = id else {
            return (
                out,
                Some(StorageError::BadRecord {
                    offset: off,
                    reason: "identifier out of range",
                }),
            );
        };
        let payload = &bytes[off + RECORD_HEADER..off + RECORD_HEADER + len];
        out.push(LogRecord {
            timestamp_us: ts,
            frame: Frame::new(id, payload, src).expect("length checked"),
        });
        off += RECORD_HEADER + len;
    }
    (out, None)
}

/// The logger's view of its card: one open file, older closed files waiting
/// for upload.
#[derive(Debug, Clone)]
pub struct LoggerState {
    current_seq: u32,
    alarm_raised: bool,
    dropped: u64,
    written: u64,
    last_timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Logged,
    Excluded,
    /// Record dropped; `true` on the first drop since space last ran out.
    Dropped {
        raise_alarm: bool,
    },
}

impl LoggerState {
    /// Resume numbering after whatever log files `sd` already holds.
    pub fn new(sd: &SdCard) -> Self {
        let next = sd.names().filter_map(log_file_seq).max().map_or(0, |s| s + 1);
        LoggerState {
            current_seq: next,
            alarm_raised: false,
            dropped: 0,
            written: 0,
            last_timestamp: 0,
        }
    }

    pub fn current_file(&self) -> String {
        log_file_name(self.current_seq)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    /// Append one delivered frame unless it is file-transfer traffic.
    /// Timestamps never run backwards within the log.
    pub fn ingest(&mut self, sd: &mut SdCard, frame: &Frame, timestamp_us: u64) -> IngestOutcome {
        if ids::is_file_transfer(frame.id()) {
            return IngestOutcome::Excluded;
        }
        let ts = timestamp_us.max(self.last_timestamp);
        let rec = LogRecord {
            timestamp_us: ts,
            frame: frame.clone(),
        };
        match sd.append(&self.current_file(), &rec.to_bytes()) {
            Ok(()) => {
                self.last_timestamp = ts;
                self.written += 1;
                self.alarm_raised = false;
                IngestOutcome::Logged
            }
            Err(_) => {
                self.dropped += 1;
                let raise = !self.alarm_raised;
                if raise {
                    // whatever follows the hole starts a fresh file
                    self.close_current(sd);
                }
                self.alarm_raised = true;
                IngestOutcome::Dropped { raise_alarm: raise }
            }
        }
    }

    /// Start a new file if the open one has records.
    pub fn close_current(&mut self, sd: &SdCard) {
        if sd.read(&self.current_file()).is_some_and(|b| !b.is_empty()) {
            self.current_seq += 1;
        }
    }

    /// File to hand out on an upload request: the oldest closed log, else the
    /// open one after closing it. `None` when there is nothing to send.
    pub fn take_for_upload(&mut self, sd: &SdCard) -> Option<String> {
        let oldest_closed = sd
            .names()
            .filter_map(|n| log_file_seq(n).map(|s| (s, n)))
            .filter(|(s, _)| *s < self.current_seq)
            .min_by_key(|(s, _)| *s)
            .map(|(_, n)| n.to_string());
        if oldest_closed.is_some() {
            return oldest_closed;
        }
        let current = self.current_file();
        if sd.read(&current).is_some_and(|b| !b.is_empty()) {
            self.current_seq += 1;
            return Some(current);
        }
        None
    }
}
