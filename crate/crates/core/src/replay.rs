//! Re-derive what the loggers should have written from a bus trace and
//! compare it with the archived logs.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::bus::{BusError, BusEvent, Frame};
use crate::gateway::{Archive, GatewayError};
use crate::ids::{self, is_file_transfer};
use crate::nodes::storage::{decode_log, log_file_seq, LogRecord};
use crate::nodes::MAX_DRIFT_PPM;

pub const TRACE_HEADER: &str = "time_us,src,id,len,payload";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("trace: {0}")]
    Trace(#[from] BusError),
    #[error("trace is missing its header line")]
    MissingHeader,
    #[error("archive: {0}")]
    Archive(#[from] GatewayError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub fn write_trace(mut w: impl Write, events: &[BusEvent]) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for e in events {
        writeln!(w, "{}", e.trace_line())?;
    }
    Ok(())
}

pub fn parse_trace(r: impl BufRead) -> Result<Vec<BusEvent>, FormatError> {
    let mut lines = r.lines().enumerate();
    let io = |e: std::io::Error| FormatError::Io {
        path: "trace".into(),
        message: e.to_string(),
    };
    let Some((_, first)) = lines.next() else {
        return Err(FormatError::MissingHeader);
    };
    if first.map_err(io)?.trim() != TRACE_HEADER {
        return Err(FormatError::MissingHeader);
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(BusEvent::parse_trace_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<BusEvent>, FormatError> {
    let p = path.as_ref();
    let f = std::fs::File::open(p).map_err(|e| FormatError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    })?;
    parse_trace(std::io::BufReader::new(f))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub file: String,
    /// Index of the first record that has no counterpart in the trace.
    pub record: usize,
    /// Byte offset of that record within the file.
    pub offset: usize,
    pub reason: String,
}

/// A run of loggable trace frames that no archived file covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Gap {
    pub from_us: u64,
    pub to_us: u64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileMatch {
    pub file: String,
    pub records: usize,
    /// Trace time of the first and last matched frames.
    pub from_us: u64,
    pub to_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub clean: bool,
    pub divergence: Option<Divergence>,
    pub expected_frames: usize,
    pub covered_frames: usize,
    pub files: Vec<FileMatch>,
    pub gaps: Vec<Gap>,
}

fn same(rec: &LogRecord, f: &Frame) -> bool {
    rec.frame.source() == f.source() && rec.frame.id() == f.id() && rec.frame.payload() == f.payload()
}

/// Logger timestamps come from the logger's own clock, so only their spacing
/// is comparable with trace time. A record can never sit further from its
/// predecessor than the trace allows for drift; clock syncs may jump forward
/// just after a GPS clock frame, and backward jumps are clamped to zero.
fn spacing_ok(prev: (&LogRecord, &BusEvent), cur: (&LogRecord, &BusEvent)) -> bool {
    if prev.0.frame.id().value() == ids::GPS_CLOCK {
        return true;
    }
    let logged = cur.0.timestamp_us.saturating_sub(prev.0.timestamp_us) as f64;
    let traced = (cur.1.time - prev.1.time) as f64;
    logged <= traced * (1.0 + MAX_DRIFT_PPM / 1e6) + 2.0
}

fn first_timestamp(bytes: &[u8]) -> u64 {
    bytes
        .get(..8)
        .map_or(u64::MAX, |b| u64::from_le_bytes(b.try_into().unwrap()))
}

/// Every archived log, oldest first, must equal a contiguous run of the
/// trace's loggable frames starting at or after where the previous file
/// ended. Frames between runs are gaps, not errors.
pub fn replay_verify(trace: &[BusEvent], archive: &Archive) -> ReplayReport {
    let expected: Vec<&BusEvent> = trace.iter().filter(|e| !is_file_transfer(e.frame.id())).collect();
    let mut logs: Vec<_> = archive
        .files()
        .iter()
        .filter(|f| log_file_seq(&f.name).is_some())
        .collect();
    logs.sort_by_key(|f| (first_timestamp(&f.bytes), log_file_seq(&f.name), f.name.clone()));

    let mut covered = vec![false; expected.len()];
    let mut files = Vec::new();
    let mut divergence = None;
    let mut cursor = 0usize;
    'files: for f in logs {
        let (records, err) = decode_log(&f.bytes);
        if records.is_empty() && err.is_none() {
            continue;
        }
        let offset_of = |i: usize| records[..i].iter().map(LogRecord::encoded_len).sum::<usize>();
        // best = (start, matched prefix length)
        let mut best: Option<(usize, usize)> = None;
        for start in cursor..expected.len() {
            let pairs: Vec<_> = records.iter().zip(expected[start..].iter().copied()).collect();
            let n = pairs
                .iter()
                .enumerate()
                .take_while(|(i, (r, e))| same(r, &e.frame) && (*i == 0 || spacing_ok(pairs[i - 1], pairs[*i])))
                .count();
            if n == records.len() {
                best = Some((start, n));
                break;
            }
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((start, n));
            }
        }
        match best {
            Some((start, n)) if n == records.len() => {
                if let Some(e) = err {
                    divergence = Some(Divergence {
                        file: f.name.clone(),
                        record: n,
                        offset: offset_of(n),
                        reason: e.to_string(),
                    });
                    break 'files;
                }
                for c in &mut covered[start..start + n] {
                    *c = true;
                }
                files.push(FileMatch {
                    file: f.name.clone(),
                    records: n,
                    from_us: expected[start].time,
                    to_us: expected[start + n - 1].time,
                });
                cursor = start + n;
            }
            other => {
                let n = other.map_or(0, |(_, n)| n);
                divergence = Some(Divergence {
                    file: f.name.clone(),
                    record: n,
                    offset: offset_of(n),
                    reason: if n < records.len() {
                        "record has no matching frame in the trace at its logged spacing".into()
                    } else {
                        "file extends past the end of the trace".into()
                    },
                });
                break 'files;
            }
        }
    }

    let mut gaps = Vec::new();
    let mut i = 0;
    while i < expected.len() {
        if covered[i] {
            i += 1;
            continue;
        }
        let j = (i..expected.len()).find(|k| covered[*k]).unwrap_or(expected.len());
        gaps.push(Gap {
            from_us: expected[i].time,
            to_us: expected[j - 1].time,
            frames: j - i,
        });
        i = j;
    }
    ReplayReport {
        clean: divergence.is_none(),
        divergence,
        expected_frames: expected.len(),
        covered_frames: covered.iter().filter(|c| **c).count(),
        files,
        gaps,
    }
}

/// File-based form used by the command line.
pub fn replay_verify_files(
    trace: impl AsRef<Path>,
    archive_dir: impl AsRef<Path>,
) -> Result<ReplayReport, FormatError> {
    let events = read_trace(trace)?;
    let archive = Archive::load(archive_dir)?;
    Ok(replay_verify(&events, &archive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{FrameId, NodeId};

    fn ev(t: u64, id: u32, b: u8) -> BusEvent {
        BusEvent {
            time: t,
            frame: Frame::new(FrameId::standard(id).unwrap(), &[b], NodeId(2)).unwrap(),
        }
    }

    fn log(events: &[BusEvent]) -> Vec<u8> {
        let mut out = Vec::new();
        for e in events {
            LogRecord {
                timestamp_us: e.time,
                frame: e.frame.clone(),
            }
            .encode_into(&mut out);
        }
        out
    }

    #[test]
    fn gaps_and_exclusion() {
        let trace: Vec<BusEvent> = (0..10)
            .map(|i| ev(i * 10, if i == 3 { 0x601 } else { 0x401 }, i as u8))
            .collect();
        let loggable: Vec<BusEvent> = trace
            .iter()
            .filter(|e| e.frame.id().value() != 0x601)
            .cloned()
            .collect();
        let mut a = Archive::in_memory();
        a.store("LOG0.BIN", log(&loggable[..4]), 0).unwrap();
        a.store("LOG1.BIN", log(&loggable[6..]), 0).unwrap();
        let r = replay_verify(&trace, &a);
        assert!(r.clean, "{r:?}");
        assert_eq!(r.expected_frames, 9);
        assert_eq!(
            r.gaps,
            vec![Gap {
                from_us: 50,
                to_us: 60,
                frames: 2
            }]
        );
    }

    #[test]
    fn deleted_record_diverges() {
        let trace: Vec<BusEvent> = (0..6).map(|i| ev(i, 0x401, i as u8)).collect();
        let mut damaged = trace.clone();
        damaged.remove(2);
        let mut a = Archive::in_memory();
        a.store("LOG0.BIN", log(&damaged), 0).unwrap();
        let d = replay_verify(&trace, &a).divergence.unwrap();
        assert_eq!(d.record, 2);
        assert_eq!(d.offset, 2 * (8 + 1 + 4 + 1 + 1));
    }

    #[test]
    fn deleted_repeat_is_caught_by_spacing() {
        // identical frames: only the timestamps give the hole away
        let trace: Vec<BusEvent> = (0..6).map(|i| ev(1_000_000 * i, 0x401, 7)).collect();
        let mut logged = trace.clone();
        for e in &mut logged {
            e.time += 40_000_000;
        }
        let mut a = Archive::in_memory();
        a.store("LOG0.BIN", log(&logged), 0).unwrap();
        assert!(replay_verify(&trace, &a).clean);
        logged.remove(3);
        let mut a = Archive::in_memory();
        a.store("LOG0.BIN", log(&logged), 0).unwrap();
        assert_eq!(replay_verify(&trace, &a).divergence.unwrap().record, 3);
    }

    #[test]
    fn clock_sync_may_jump_forward() {
        let mut trace: Vec<BusEvent> = (0..4).map(|i| ev(1_000_000 * i, 0x401, 7)).collect();
        trace[1].frame = Frame::new(FrameId::standard(ids::GPS_CLOCK).unwrap(), &[0; 8], NodeId(7)).unwrap();
        let mut logged = trace.clone();
        for e in &mut logged[2..] {
            e.time += 3_000_000;
        }
        let mut a = Archive::in_memory();
        a.store("LOG0.BIN", log(&logged), 0).unwrap();
        assert!(replay_verify(&trace, &a).clean);
    }

    #[test]
    fn trace_text_round_trip() {
        let trace = vec![ev(5, 0x401, 1), ev(9, 0x055, 2)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(parse_trace(&buf[..]).unwrap(), trace);
        assert!(matches!(
            parse_trace(&b"1,2,401,0,\n"[..]),
            Err(FormatError::MissingHeader)
        ));
    }
}
