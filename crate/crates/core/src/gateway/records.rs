//! Decoding archived logs into typed records.

use crate::bus::{FrameId, NodeId};
use crate::ids::{self, MessageClass};
use crate::nodes::storage::{decode_log, LogRecord, StorageError};
use crate::sensors::SensorReading;

#[derive(Debug, Clone, PartialEq)]
pub enum RecordKind {
    Reading(SensorReading),
    Position {
        latitude: f64,
        longitude: f64,
    },
    Clock {
        unix_us: u64,
    },
    PowerAlarm {
        logic: f64,
        power: f64,
    },
    /// Anything else with an allocated or unknown identifier.
    Opaque {
        id: FrameId,
        payload: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRecord {
    pub timestamp_us: u64,
    pub source: NodeId,
    pub kind: RecordKind,
}

/// A log that ended mid-record; everything before the cut is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLog {
    pub offset: usize,
    pub records: Vec<DecodedRecord>,
}

fn decode_record(r: &LogRecord) -> DecodedRecord {
    let f = &r.frame;
    let p = f.payload();
    let kind = match ids::classify(f.id()) {
        MessageClass::Sensor(_) => match SensorReading::from_frame(f, r.timestamp_us) {
            Ok(reading) => RecordKind::Reading(reading),
            Err(_) => opaque(r),
        },
        _ if f.id().value() == ids::GPS_POSITION && p.len() == 8 => RecordKind::Position {
            latitude: i32::from_le_bytes(p[..4].try_into().unwrap()) as f64 / 1e7,
            longitude: i32::from_le_bytes(p[4..].try_into().unwrap()) as f64 / 1e7,
        },
        _ if f.id().value() == ids::GPS_CLOCK && p.len() == 8 => RecordKind::Clock {
            unix_us: u64::from_le_bytes(p.try_into().unwrap()),
        },
        _ if f.id().value() == ids::POWER_ALARM && p.len() == 4 => RecordKind::PowerAlarm {
            logic: u16::from_le_bytes([p[0], p[1]]) as f64 / 1000.0,
            power: u16::from_le_bytes([p[2], p[3]]) as f64 / 1000.0,
        },
        _ => opaque(r),
    };
    DecodedRecord {
        timestamp_us: r.timestamp_us,
        source: f.source(),
        kind,
    }
}

fn opaque(r: &LogRecord) -> RecordKind {
    RecordKind::Opaque {
        id: r.frame.id(),
        payload: r.frame.payload().to_vec(),
    }
}

pub fn ingest_log(bytes: &[u8]) -> Result<Vec<DecodedRecord>, TruncatedLog> {
    let (recs, err) = decode_log(bytes);
    let records = recs.iter().map(decode_record).collect();
    match err {
        None => Ok(records),
        Some(StorageError::TruncatedRecord { offset } | StorageError::BadRecord { offset, .. }) => {
            Err(TruncatedLog { offset, records })
        }
        Some(_) => unreachable!("decode_log only reports record errors"),
    }
}
