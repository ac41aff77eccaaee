//! The two ways off the instrument: the main modem carrying log uploads to
//! the gateway, and the SMS bridge carrying raw bus frames either way.
//!
//! Upload wire format and reply:
//!
//! ```text
//! [name_len:1][name][size:8 LE][bytes][crc:2 LE]
//! [0x01 ack | 0x00 nack][crc:2 LE]
//! ```

use std::collections::VecDeque;

use thiserror::Error;

use crate::bus::{Frame, FrameId, IdWidth, NodeId, Ticks, MAX_PAYLOAD};
use crate::nodes::storage::SdCard;
use crate::transport::crc16;

pub const SMS_SEGMENT: usize = 140;
pub const DEFAULT_SMS_LATENCY: Ticks = 5_000_000;
const SMS_HEADER: usize = 5;
const EXTENDED_FLAG: u32 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UplinkError {
    #[error("malformed upload: {0}")]
    MalformedUpload(&'static str),
    #[error("main modem is not connected")]
    NotConnected,
    #[error("main modem failed mid-transfer after {bytes_sent} bytes")]
    ModemFailed { bytes_sent: usize },
    #[error("no file {0} to upload")]
    NoSuchFile(String),
    #[error("SMS stream ended inside a frame ({0} bytes pending)")]
    TruncatedStream(usize),
    #[error("bad frame in SMS stream: {0}")]
    BadFrame(&'static str),
    #[error("backup modem unavailable")]
    BackupUnavailable,
    #[error("main modem is still connected")]
    MainModemHealthy,
    #[error("gateway connection: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModemState {
    Idle,
    Connected,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainModem {
    pub state: ModemState,
    /// bytes per second
    pub bandwidth: f64,
    pub latency: Ticks,
}

impl MainModem {
    pub fn new(bandwidth: f64, latency: Ticks) -> Self {
        MainModem {
            state: ModemState::Connected,
            bandwidth,
            latency,
        }
    }

    pub fn transfer_time(&self, bytes: usize) -> Ticks {
        self.latency + (bytes as f64 * 1e6 / self.bandwidth).ceil() as Ticks
    }

    /// Bytes on the wire by `elapsed` into a transfer.
    pub fn bytes_by(&self, elapsed: Ticks, total: usize) -> usize {
        let moving = elapsed.saturating_sub(self.latency) as f64 / 1e6;
        ((moving * self.bandwidth) as usize).min(total)
    }
}

pub fn encode_upload(name: &str, bytes: &[u8]) -> Vec<u8> {
    let mut w = Vec::with_capacity(name.len() + bytes.len() + 11);
    w.push(name.len() as u8);
    w.extend_from_slice(name.as_bytes());
    w.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    w.extend_from_slice(bytes);
    w.extend_from_slice(&crc16(bytes).to_le_bytes());
    w
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedUpload {
    pub name: String,
    pub bytes: Vec<u8>,
    pub stated_crc: u16,
}

/// Offset of the file body inside an upload for `name`.
pub fn upload_body_offset(name: &str) -> usize {
    1 + name.len() + 8
}

pub fn decode_upload(wire: &[u8]) -> Result<ParsedUpload, UplinkError> {
    let n = *wire.first().ok_or(UplinkError::MalformedUpload("empty"))? as usize;
    let name = wire.get(1..1 + n).ok_or(UplinkError::MalformedUpload("short name"))?;
    let name = std::str::from_utf8(name)
        .map_err(|_| UplinkError::MalformedUpload("name is not UTF-8"))?
        .to_string();
    if name.is_empty() || name.contains(['/', '\\', '\t', '\n']) || name.starts_with('.') {
        return Err(UplinkError::MalformedUpload("unusable file name"));
    }
    let size_at = 1 + n;
    let size = wire
        .get(size_at..size_at + 8)
        .ok_or(UplinkError::MalformedUpload("short size"))?;
    let size = u64::from_le_bytes(size.try_into().unwrap()) as usize;
    let body = size_at + 8;
    if wire.len() != body + size + 2 {
        return Err(UplinkError::MalformedUpload("length disagrees with size field"));
    }
    Ok(ParsedUpload {
        name,
        bytes: wire[body..body + size].to_vec(),
        stated_crc: u16::from_le_bytes([wire[body + size], wire[body + size + 1]]),
    })
}

pub fn encode_reply(ack: bool, crc: u16) -> [u8; 3] {
    let c = crc.to_le_bytes();
    [ack as u8, c[0], c[1]]
}

pub fn decode_reply(r: &[u8]) -> Result<(bool, u16), UplinkError> {
    match r {
        [a @ (0 | 1), c0, c1] => Ok((*a == 1, u16::from_le_bytes([*c0, *c1]))),
        _ => Err(UplinkError::MalformedUpload("bad reply")),
    }
}

/// Whatever sits at the far end of the main modem.
pub trait UploadSink {
    /// Deliver a complete upload and return the gateway's reply.
    fn deliver(&mut self, wire: &[u8], received_at_ms: u64) -> Result<Vec<u8>, UplinkError>;
    /// The link dropped after `prefix` was sent.
    fn deliver_partial(&mut self, prefix: &[u8]);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadSession {
    pub file_name: String,
    pub bytes_sent: usize,
    pub local_crc: u16,
    pub remote_crc: Option<u16>,
}

impl UploadSession {
    pub fn new(file_name: impl Into<String>, bytes: &[u8]) -> Self {
        UploadSession {
            file_name: file_name.into(),
            bytes_sent: 0,
            local_crc: crc16(bytes),
            remote_crc: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UploadResult {
    Acked { crc: u16 },
    ChecksumMismatch { local: u16, remote: u16 },
}

/// Faults applied to one transfer attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkFault {
    /// Flip this byte of the file body in flight.
    pub corrupt_body_byte: Option<usize>,
    /// Drop the link after this many wire bytes.
    pub cut_after: Option<usize>,
}

/// Send one file from `sd`; it is removed only when the gateway's checksum
/// matches the local one.
pub fn upload_log(
    session: &mut UploadSession,
    sd: &mut SdCard,
    modem: &MainModem,
    sink: &mut dyn UploadSink,
    fault: LinkFault,
    now_ms: u64,
) -> Result<UploadResult, UplinkError> {
    if modem.state != ModemState::Connected {
        return Err(UplinkError::NotConnected);
    }
    let bytes = sd
        .read(&session.file_name)
        .ok_or_else(|| UplinkError::NoSuchFile(session.file_name.clone()))?;
    session.local_crc = crc16(bytes);
    session.remote_crc = None;
    let mut wire = encode_upload(&session.file_name, bytes);
    if let Some(i) = fault.corrupt_body_byte {
        let at = if bytes.is_empty() {
            wire.len() - 1
        } else {
            upload_body_offset(&session.file_name) + i % bytes.len()
        };
        wire[at] ^= 0xFF;
    }
    if let Some(n) = fault.cut_after.filter(|n| *n < wire.len()) {
        session.bytes_sent = n;
        sink.deliver_partial(&wire[..n]);
        return Err(UplinkError::ModemFailed { bytes_sent: n });
    }
    session.bytes_sent = wire.len();
    let (ack, remote) = decode_reply(&sink.deliver(&wire, now_ms)?)?;
    session.remote_crc = Some(remote);
    if ack && remote == session.local_crc {
        sd.delete(&session.file_name).expect("file read above");
        Ok(UploadResult::Acked { crc: remote })
    } else {
        Ok(UploadResult::ChecksumMismatch {
            local: session.local_crc,
            remote,
        })
    }
}

/// `[id:4 LE][len:1][payload]`; extended identifiers carry bit 31.
pub fn serialize_frame_for_sms(frame: &Frame) -> Vec<u8> {
    let id = frame.id();
    let raw = match id.width() {
        IdWidth::Standard11 => id.value(),
        IdWidth::Extended29 => id.value() | EXTENDED_FLAG,
    };
    let mut v = Vec::with_capacity(SMS_HEADER + frame.payload().len());
    v.extend_from_slice(&raw.to_le_bytes());
    v.push(frame.payload().len() as u8);
    v.extend_from_slice(frame.payload());
    v
}

/// Incremental decoder; a frame split across segments waits for the rest.
#[derive(Debug, Clone)]
pub struct SmsDeserializer {
    buf: Vec<u8>,
    source: NodeId,
}

impl SmsDeserializer {
    /// Frames come out stamped with `source`, the node that puts them on a bus.
    pub fn new(source: NodeId) -> Self {
        SmsDeserializer {
            buf: Vec::new(),
            source,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) -> Result<Vec<Frame>, UplinkError> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut off = 0;
        while self.buf.len() - off >= SMS_HEADER {
            let h = &self.buf[off..off + SMS_HEADER];
            let raw = u32::from_le_bytes(h[..4].try_into().unwrap());
            let len = h[4] as usize;
            if len > MAX_PAYLOAD {
                return Err(UplinkError::BadFrame("payload length over 8"));
            }
            if self.buf.len() - off - SMS_HEADER < len {
                break;
            }
            let id = if raw & EXTENDED_FLAG != 0 {
                FrameId::extended(raw & !EXTENDED_FLAG)
            } else {
                FrameId::standard(raw)
            }
            .map_err(|_| UplinkError::BadFrame("identifier out of range"))?;
            let payload = &self.buf[off + SMS_HEADER..off + SMS_HEADER + len];
            out.push(Frame::new(id, payload, self.source).expect("length checked"));
            off += SMS_HEADER + len;
        }
        self.buf.drain(..off);
        Ok(out)
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// End of session; leftover bytes mean a frame was cut short.
    pub fn finish(&self) -> Result<(), UplinkError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(UplinkError::TruncatedStream(n)),
        }
    }
}

pub fn segment_sms(bytes: &[u8]) -> Vec<Vec<u8>> {
    bytes.chunks(SMS_SEGMENT).map(<[u8]>::to_vec).collect()
}

/// One direction of the SMS link: bytes are packed into segments of at
/// most 140 bytes, each taking `latency` to arrive, first in first out.
#[derive(Debug, Clone)]
pub struct SmsBridge {
    pub segment_size: usize,
    pub latency: Ticks,
    pending: Vec<u8>,
    queue: VecDeque<(Ticks, Vec<u8>)>,
    last_arrival: Ticks,
    sent: u64,
}

impl SmsBridge {
    pub fn new(latency: Ticks) -> Self {
        SmsBridge {
            segment_size: SMS_SEGMENT,
            latency,
            pending: Vec::new(),
            queue: VecDeque::new(),
            last_arrival: 0,
            sent: 0,
        }
    }

    fn send(&mut self, seg: Vec<u8>, now: Ticks) -> Ticks {
        let arrival = now.max(self.last_arrival) + self.latency;
        self.last_arrival = arrival;
        self.sent += 1;
        self.queue.push_back((arrival, seg));
        arrival
    }

    /// Buffer bytes; every full segment is sent right away. Returns the
    /// arrival times of segments sent.
    pub fn push(&mut self, bytes: &[u8], now: Ticks) -> Vec<Ticks> {
        self.pending.extend_from_slice(bytes);
        let mut arrivals = Vec::new();
        while self.pending.len() >= self.segment_size {
            let seg: Vec<u8> = self.pending.drain(..self.segment_size).collect();
            arrivals.push(self.send(seg, now));
        }
        arrivals
    }

    /// Send whatever partial segment is buffered.
    pub fn flush(&mut self, now: Ticks) -> Option<Ticks> {
        if self.pending.is_empty() {
            return None;
        }
        let seg = std::mem::take(&mut self.pending);
        Some(self.send(seg, now))
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn next_arrival(&self) -> Option<Ticks> {
        self.queue.front().map(|(t, _)| *t)
    }

    pub fn take_arrived(&mut self, now: Ticks) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|(t, _)| *t <= now) {
            out.push(self.queue.pop_front().unwrap().1);
        }
        out
    }

    pub fn segments_sent(&self) -> u64 {
        self.sent
    }
}
