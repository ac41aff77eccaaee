//! Ground side: receives and verifies uploads, archives them and turns the
//! archived logs into normalized data.

pub mod archive;
pub mod records;
pub mod server;
pub mod sites;

use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::nodes::storage::log_file_seq;
use crate::sensors::{BiasCalibration, SensorKind, SensorReading};
use crate::transport::crc16;
use crate::uplink::{decode_upload, encode_reply, UplinkError, UploadSink};

pub use archive::{Archive, ArchivedFile};
pub use records::{ingest_log, DecodedRecord, RecordKind, TruncatedLog};
pub use server::{gateway_port, GatewayServer, TcpSink};
pub use sites::{normalize_magnetometer, normalize_or_raw, ArmTimeline, NormalizedMag, Site, SiteLog};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("archive i/o: {0}")]
    Io(String),
    #[error("index line {line} is malformed")]
    MalformedIndex { line: usize },
    #[error("archived file {0} does not match its index entry")]
    Corrupt(String),
    #[error("no magnetometer calibration loaded")]
    MissingCalibration,
    #[error("no arm angle history")]
    NoArmHistory,
    #[error("reading is not a magnetometer vector")]
    NotMagnetometer,
    #[error("arm sample at {0} us is not after the previous one")]
    TimelineOrder(u64),
}

impl From<io::Error> for GatewayError {
    fn from(e: io::Error) -> Self {
        GatewayError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub acked: u64,
    pub nacked: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    archive: Archive,
    calibration: Option<BiasCalibration>,
    stats: GatewayStats,
}

impl Gateway {
    pub fn new(archive: Archive) -> Self {
        Gateway {
            archive,
            calibration: None,
            stats: GatewayStats::default(),
        }
    }

    pub fn with_calibration(mut self, cal: BiasCalibration) -> Self {
        self.calibration = Some(cal);
        self
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn calibration(&self) -> Option<&BiasCalibration> {
        self.calibration.as_ref()
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats
    }

    pub(crate) fn note_malformed(&mut self) {
        self.stats.malformed += 1;
        self.stats.nacked += 1;
    }

    /// Check an upload against its trailing checksum and archive it on a
    /// match. Returns the reply bytes.
    pub fn receive_upload(&mut self, wire: &[u8], received_at_ms: u64) -> Vec<u8> {
        let upload = match decode_upload(wire) {
            Ok(u) => u,
            Err(e) => {
                log::debug!("rejecting upload: {e}");
                self.note_malformed();
                return encode_reply(false, 0).to_vec();
            }
        };
        let crc = crc16(&upload.bytes);
        if crc != upload.stated_crc {
            self.stats.nacked += 1;
            return encode_reply(false, crc).to_vec();
        }
        match self.archive.store(&upload.name, upload.bytes, received_at_ms) {
            Ok(_) => {
                self.stats.acked += 1;
                encode_reply(true, crc).to_vec()
            }
            Err(e) => {
                log::warn!("archive write failed: {e}");
                self.stats.nacked += 1;
                encode_reply(false, crc).to_vec()
            }
        }
    }

    /// Decode every archived log, oldest sequence first.
    pub fn process(&self, sites: &SiteLog) -> Processed {
        let mut logs: Vec<&ArchivedFile> = self
            .archive
            .files()
            .iter()
            .filter(|f| log_file_seq(&f.name).is_some())
            .collect();
        logs.sort_by_key(|f| (first_timestamp(&f.bytes), log_file_seq(&f.name)));
        let mut records = Vec::new();
        let mut truncated = Vec::new();
        for f in logs {
            match ingest_log(&f.bytes) {
                Ok(r) => records.extend(r),
                Err(t) => {
                    truncated.push((f.name.clone(), t.offset));
                    records.extend(t.records);
                }
            }
        }
        let readings: Vec<SensorReading> = records
            .iter()
            .filter_map(|r| match &r.kind {
                RecordKind::Reading(x) => Some(x.clone()),
                _ => None,
            })
            .collect();
        let arm = ArmTimeline::from_readings(&readings);
        let magnetometer = readings
            .iter()
            .filter(|r| r.kind == SensorKind::Mag)
            .map(|r| normalize_or_raw(r, &arm, self.calibration.as_ref()))
            .collect();
        let fixes: Vec<(f64, f64, f64)> = records
            .iter()
            .filter_map(|r| match r.kind {
                RecordKind::Position { latitude, longitude } => {
                    Some((r.timestamp_us as f64 / 1e6, latitude, longitude))
                }
                _ => None,
            })
            .collect();
        let mut sites = sites.clone();
        sites.attribute_fixes(&fixes);
        Processed {
            records,
            readings,
            magnetometer,
            sites,
            truncated,
        }
    }
}

fn first_timestamp(bytes: &[u8]) -> u64 {
    bytes
        .get(..8)
        .map_or(u64::MAX, |b| u64::from_le_bytes(b.try_into().unwrap()))
}

/// Results of one pass over the archive.
#[derive(Debug, Clone)]
pub struct Processed {
    pub records: Vec<DecodedRecord>,
    pub readings: Vec<SensorReading>,
    pub magnetometer: Vec<NormalizedMag>,
    pub sites: SiteLog,
    pub truncated: Vec<(String, usize)>,
}

impl UploadSink for Gateway {
    fn deliver(&mut self, wire: &[u8], received_at_ms: u64) -> Result<Vec<u8>, UplinkError> {
        Ok(self.receive_upload(wire, received_at_ms))
    }

    fn deliver_partial(&mut self, _prefix: &[u8]) {
        self.note_malformed();
    }
}
