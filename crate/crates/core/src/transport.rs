//! Multipacket transport over 8-byte frames.
//!
//! Two transfer kinds share one announce frame layout:
//!
//! ```text
//! announce   [kind:1][msg_type:1][len:4 LE][chunks:2 LE]
//! broadcast  [seq:1][data:<=7]
//! large      [index:4 LE][data:<=4]
//! cts        [0xC7][index:4 LE]
//! ```
//!
//! Broadcast transfers are capped at 255 chunks; large transfers trade
//! density for a 32-bit chunk index and carry firmware images, log files and
//! camera pictures. The chunk field of the announce holds the low 16 bits of
//! the chunk count; receivers derive the true count from `len`.
//!
//! Firmware streaming adds strict receiver pacing on top: see [`CtsSender`]
//! and [`CtsReceiver`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bus::{Frame, NodeId, Ticks};
use crate::ids::{self, MessageClass};

pub use crate::crc::{crc16, Crc16};

pub const BROADCAST_CHUNK: usize = 7;
pub const LARGE_CHUNK: usize = 4;
pub const MAX_BROADCAST_CHUNKS: usize = 255;
pub const MAX_BROADCAST_PAYLOAD: usize = MAX_BROADCAST_CHUNKS * BROADCAST_CHUNK;
pub const CTS_MARKER: u8 = 0xC7;

pub const DEFAULT_SESSION_TIMEOUT: Ticks = 5_000_000;
pub const DEFAULT_CTS_TIMEOUT: Ticks = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("broadcast payload of {0} bytes exceeds 1785")]
    TooLarge(usize),
    #[error("no announced session for node {origin} type {msg_type:#04x}")]
    UnknownSession { origin: NodeId, msg_type: u8 },
    #[error("chunk {index} outside session of {total} chunks")]
    ChunkOutOfRange { index: u32, total: u32 },
    #[error("session from node {origin} timed out")]
    SessionTimeout { origin: NodeId },
    #[error("no clear-to-send for chunk {chunk_index} within the window")]
    CtsTimeout { chunk_index: u32 },
    #[error("chunk {got} arrived while expecting {expected}")]
    ChunkGap { expected: u32, got: u32 },
    #[error("unexpected clear-to-send for chunk {got}")]
    UnexpectedCts { got: u32 },
    #[error("malformed transport frame: {0}")]
    Malformed(&'static str),
    #[error("chunk size must be a positive multiple of 4")]
    BadChunkSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransferKind {
    Broadcast,
    LargeTransfer,
}

impl TransferKind {
    fn code(self) -> u8 {
        match self {
            TransferKind::Broadcast => 0,
            TransferKind::LargeTransfer => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, TransportError> {
        match code {
            0 => Ok(TransferKind::Broadcast),
            1 => Ok(TransferKind::LargeTransfer),
            _ => Err(TransportError::Malformed("unknown transfer kind")),
        }
    }

    pub fn chunk_data_size(self) -> usize {
        match self {
            TransferKind::Broadcast => BROADCAST_CHUNK,
            TransferKind::LargeTransfer => LARGE_CHUNK,
        }
    }

    fn announce_base(self) -> u32 {
        match self {
            TransferKind::Broadcast => ids::BROADCAST_ANNOUNCE_BASE,
            TransferKind::LargeTransfer => ids::LARGE_ANNOUNCE_BASE,
        }
    }

    fn data_base(self) -> u32 {
        match self {
            TransferKind::Broadcast => ids::BROADCAST_DATA_BASE,
            TransferKind::LargeTransfer => ids::LARGE_DATA_BASE,
        }
    }
}

/// Well-known message types.
pub mod msg_type {
    pub const FIRMWARE: u8 = 0x01;
    pub const FILE: u8 = 0x02;
    pub const IMAGE: u8 = 0x03;
    pub const NODE_STATUS: u8 = 0x10;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportMessage {
    pub kind: TransferKind,
    pub msg_type: u8,
    pub payload: Vec<u8>,
    pub origin: NodeId,
}

impl TransportMessage {
    pub fn new(kind: TransferKind, msg_type: u8, payload: Vec<u8>, origin: NodeId) -> Self {
        TransportMessage {
            kind,
            msg_type,
            payload,
            origin,
        }
    }

    pub fn total_chunks(&self) -> usize {
        chunk_count(self.kind, self.payload.len())
    }
}

fn chunk_count(kind: TransferKind, len: usize) -> usize {
    len.div_ceil(kind.chunk_data_size())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Announce {
    pub kind: TransferKind,
    pub msg_type: u8,
    pub len: u32,
    pub chunks: u16,
}

impl Announce {
    pub fn encode(&self) -> [u8; 8] {
        let mut b = [0u8; 8];
        b[0] = self.kind.code();
        b[1] = self.msg_type;
        b[2..6].copy_from_slice(&self.len.to_le_bytes());
        b[6..8].copy_from_slice(&self.chunks.to_le_bytes());
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        if bytes.len() != 8 {
            return Err(TransportError::Malformed("announce must be 8 bytes"));
        }
        let kind = TransferKind::from_code(bytes[0])?;
        let len = u32::from_le_bytes(bytes[2..6].try_into().unwrap());
        let chunks = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
        if chunk_count(kind, len as usize) as u16 != chunks {
            return Err(TransportError::Malformed("chunk count disagrees with length"));
        }
        if kind == TransferKind::Broadcast && len as usize > MAX_BROADCAST_PAYLOAD {
            return Err(TransportError::TooLarge(len as usize));
        }
        Ok(Announce {
            kind,
            msg_type: bytes[1],
            len,
            chunks,
        })
    }

    pub fn total_chunks(&self) -> u32 {
        chunk_count(self.kind, self.len as usize) as u32
    }
}

/// Split a message into an announce frame followed by data frames.
pub fn fragment(msg: &TransportMessage) -> Result<Vec<Frame>, TransportError> {
    if msg.kind == TransferKind::Broadcast && msg.payload.len() > MAX_BROADCAST_PAYLOAD {
        return Err(TransportError::TooLarge(msg.payload.len()));
    }
    let total = msg.total_chunks();
    let announce = Announce {
        kind: msg.kind,
        msg_type: msg.msg_type,
        len: msg.payload.len() as u32,
        chunks: total as u16,
    };
    let mut frames = Vec::with_capacity(total + 1);
    frames.push(frame(
        msg.kind.announce_base() | msg.msg_type as u32,
        &announce.encode(),
        msg.origin,
    ));
    let data_id = msg.kind.data_base() | msg.msg_type as u32;
    for (i, chunk) in msg.payload.chunks(msg.kind.chunk_data_size()).enumerate() {
        frames.push(data_frame(msg.kind, data_id, i as u32, chunk, msg.origin));
    }
    Ok(frames)
}

fn frame(id: u32, payload: &[u8], source: NodeId) -> Frame {
    Frame::new(ids::std_id(id), payload, source).expect("transport frame within 8 bytes")
}

fn data_frame(kind: TransferKind, id: u32, index: u32, chunk: &[u8], source: NodeId) -> Frame {
    let mut buf = Vec::with_capacity(8);
    match kind {
        TransferKind::Broadcast => buf.push(index as u8),
        TransferKind::LargeTransfer => buf.extend_from_slice(&index.to_le_bytes()),
    }
    buf.extend_from_slice(chunk);
    frame(id, &buf, source)
}

/// Split a large-transfer data frame into its chunk index and data.
pub fn decode_large_data(frame: &Frame) -> Result<(u32, &[u8]), TransportError> {
    let p = frame.payload();
    if p.len() < 4 {
        return Err(TransportError::Malformed(
            "large transfer data frame shorter than index",
        ));
    }
    Ok((u32::from_le_bytes(p[..4].try_into().unwrap()), &p[4..]))
}

/// Sequence of large-transfer data frames covering one paced chunk. Frame
/// indices continue across chunks: chunk `k` of `chunk_size` bytes starts at
/// frame `k * chunk_size / 4`.
pub fn paced_chunk_frames(
    msg_type: u8,
    chunk_index: u32,
    chunk_size: usize,
    data: &[u8],
    source: NodeId,
) -> Result<Vec<Frame>, TransportError> {
    if chunk_size == 0 || !chunk_size.is_multiple_of(LARGE_CHUNK) {
        return Err(TransportError::BadChunkSize);
    }
    let first = chunk_index * (chunk_size / LARGE_CHUNK) as u32;
    let id = ids::LARGE_DATA_BASE | msg_type as u32;
    Ok(data
        .chunks(LARGE_CHUNK)
        .enumerate()
        .map(|(j, d)| data_frame(TransferKind::LargeTransfer, id, first + j as u32, d, source))
        .collect())
}

/// Receiver-side state of one announced transfer.
#[derive(Debug, Clone)]
pub struct ReassemblyState {
    announce: Announce,
    origin: NodeId,
    expected_chunks: u32,
    received: Vec<u64>,
    received_count: u32,
    buffer: Vec<u8>,
    deadline: Ticks,
    timeout: Ticks,
}

impl ReassemblyState {
    pub fn new(announce: Announce, origin: NodeId, now: Ticks, timeout: Ticks) -> Self {
        let expected = announce.total_chunks();
        ReassemblyState {
            announce,
            origin,
            expected_chunks: expected,
            received: vec![0; (expected as usize).div_ceil(64)],
            received_count: 0,
            buffer: vec![0; announce.len as usize],
            deadline: now + timeout,
            timeout,
        }
    }

    pub fn expected_chunks(&self) -> u32 {
        self.expected_chunks
    }

    pub fn deadline(&self) -> Ticks {
        self.deadline
    }

    pub fn is_complete(&self) -> bool {
        self.received_count == self.expected_chunks
    }

    fn has(&self, i: u32) -> bool {
        self.received[(i / 64) as usize] & (1 << (i % 64)) != 0
    }

    fn message(&self) -> TransportMessage {
        TransportMessage {
            kind: self.announce.kind,
            msg_type: self.announce.msg_type,
            payload: self.buffer.clone(),
            origin: self.origin,
        }
    }

    /// Accept one data frame. Returns the message when the final missing
    /// chunk lands. Duplicate chunks are ignored. Every accepted frame pushes
    /// the inactivity deadline out again.
    pub fn accept(&mut self, frame: &Frame, now: Ticks) -> Result<Option<TransportMessage>, TransportError> {
        if now > self.deadline {
            return Err(TransportError::SessionTimeout { origin: self.origin });
        }
        let kind = self.announce.kind;
        let p = frame.payload();
        let (index, data) = match kind {
            TransferKind::Broadcast => {
                if p.is_empty() {
                    return Err(TransportError::Malformed("empty broadcast data frame"));
                }
                (p[0] as u32, &p[1..])
            }
            TransferKind::LargeTransfer => decode_large_data(frame)?,
        };
        if index >= self.expected_chunks {
            return Err(TransportError::ChunkOutOfRange {
                index,
                total: self.expected_chunks,
            });
        }
        let size = kind.chunk_data_size();
        let start = index as usize * size;
        let expected_len = (self.buffer.len() - start).min(size);
        if data.len() != expected_len {
            return Err(TransportError::Malformed("chunk data length"));
        }
        self.deadline = now + self.timeout;
        if self.has(index) {
            return Ok(None);
        }
        self.buffer[start..start + expected_len].copy_from_slice(data);
        self.received[(index / 64) as usize] |= 1 << (index % 64);
        self.received_count += 1;
        Ok(self.is_complete().then(|| self.message()))
    }
}

type SessionKey = (NodeId, TransferKind, u8);

/// Demultiplexes transport frames into per-origin sessions. One session is in
/// flight per (origin, kind, message type); a fresh announce replaces it.
#[derive(Debug, Clone)]
pub struct Reassembler {
    sessions: BTreeMap<SessionKey, ReassemblyState>,
    timeout: Ticks,
}

impl Default for Reassembler {
    fn default() -> Self {
        Self::new(DEFAULT_SESSION_TIMEOUT)
    }
}

impl Reassembler {
    pub fn new(timeout: Ticks) -> Self {
        Reassembler {
            sessions: BTreeMap::new(),
            timeout,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.sessions.len()
    }

    pub fn reset(&mut self) {
        self.sessions.clear();
    }

    /// Feed any frame. Non-transport frames yield `Ok(None)`.
    pub fn handle(&mut self, frame: &Frame, now: Ticks) -> Result<Option<TransportMessage>, TransportError> {
        let (kind, announce, msg_type) = match ids::classify(frame.id()) {
            MessageClass::BroadcastAnnounce(t) => (TransferKind::Broadcast, true, t),
            MessageClass::BroadcastData(t) => (TransferKind::Broadcast, false, t),
            MessageClass::LargeAnnounce(t) => (TransferKind::LargeTransfer, true, t),
            MessageClass::LargeData(t) => (TransferKind::LargeTransfer, false, t),
            _ => return Ok(None),
        };
        let key = (frame.source(), kind, msg_type);
        if announce {
            let a = Announce::decode(frame.payload())?;
            if a.kind != kind || a.msg_type != msg_type {
                return Err(TransportError::Malformed("announce disagrees with identifier"));
            }
            let state = ReassemblyState::new(a, frame.source(), now, self.timeout);
            if state.is_complete() {
                self.sessions.remove(&key);
                return Ok(Some(state.message()));
            }
            self.sessions.insert(key, state);
            return Ok(None);
        }
        let state = self.sessions.get_mut(&key).ok_or(TransportError::UnknownSession {
            origin: frame.source(),
            msg_type,
        })?;
        match state.accept(frame, now) {
            Ok(Some(msg)) => {
                self.sessions.remove(&key);
                Ok(Some(msg))
            }
            Err(e @ TransportError::SessionTimeout { .. }) => {
                self.sessions.remove(&key);
                Err(e)
            }
            other => other,
        }
    }

    /// Drop sessions whose deadline has passed, returning their origins.
    pub fn expire(&mut self, now: Ticks) -> Vec<NodeId> {
        let dead: Vec<SessionKey> = self
            .sessions
            .iter()
            .filter(|(_, s)| now > s.deadline)
            .map(|(k, _)| *k)
            .collect();
        for k in &dead {
            self.sessions.remove(k);
        }
        dead.into_iter().map(|k| k.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtsToken {
    pub chunk_index: u32,
    pub receiver: NodeId,
}

impl CtsToken {
    pub fn to_frame(self) -> Frame {
        let mut p = [0u8; 5];
        p[0] = CTS_MARKER;
        p[1..].copy_from_slice(&self.chunk_index.to_le_bytes());
        frame(ids::CTS, &p, self.receiver)
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, TransportError> {
        let p = frame.payload();
        if frame.id().value() != ids::CTS || p.len() != 5 || p[0] != CTS_MARKER {
            return Err(TransportError::Malformed("not a clear-to-send frame"));
        }
        Ok(CtsToken {
            chunk_index: u32::from_le_bytes(p[1..5].try_into().unwrap()),
            receiver: frame.source(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptEntry {
    Chunk(u32),
    Cts(u32),
}

/// True when the transcript alternates `Chunk(k), Cts(k)` for k = 0, 1, ...
pub fn transcript_is_strict(transcript: &[TranscriptEntry]) -> bool {
    transcript.iter().enumerate().all(|(i, e)| {
        let k = (i / 2) as u32;
        match e {
            TranscriptEntry::Chunk(c) => i % 2 == 0 && *c == k,
            TranscriptEntry::Cts(c) => i % 2 == 1 && *c == k,
        }
    })
}

/// Sender half of a paced transfer. Chunk `k + 1` is released only after the
/// receiver's token for chunk `k` arrives.
#[derive(Debug, Clone)]
pub struct CtsSender {
    payload: Vec<u8>,
    chunk_size: usize,
    next: u32,
    awaiting: Option<(u32, Ticks)>,
    window: Ticks,
    transcript: Vec<TranscriptEntry>,
}

impl CtsSender {
    pub fn new(payload: Vec<u8>, chunk_size: usize, window: Ticks) -> Result<Self, TransportError> {
        if chunk_size == 0 {
            return Err(TransportError::BadChunkSize);
        }
        Ok(CtsSender {
            payload,
            chunk_size,
            next: 0,
            awaiting: None,
            window,
            transcript: Vec::new(),
        })
    }

    pub fn total_chunks(&self) -> u32 {
        self.payload.len().div_ceil(self.chunk_size) as u32
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn is_complete(&self) -> bool {
        self.awaiting.is_none() && self.next == self.total_chunks()
    }

    pub fn awaiting(&self) -> Option<u32> {
        self.awaiting.map(|(k, _)| k)
    }

    pub fn deadline(&self) -> Option<Ticks> {
        self.awaiting.map(|(_, d)| d)
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Release the next chunk if the previous one has been cleared.
    pub fn next_chunk(&mut self, now: Ticks) -> Option<(u32, &[u8])> {
        if self.awaiting.is_some() || self.next == self.total_chunks() {
            return None;
        }
        let k = self.next;
        self.next += 1;
        self.awaiting = Some((k, now + self.window));
        self.transcript.push(TranscriptEntry::Chunk(k));
        let start = k as usize * self.chunk_size;
        let end = (start + self.chunk_size).min(self.payload.len());
        Some((k, &self.payload[start..end]))
    }

    pub fn on_cts(&mut self, token: CtsToken, now: Ticks) -> Result<(), TransportError> {
        self.check_timeout(now)?;
        match self.awaiting {
            Some((k, _)) if k == token.chunk_index => {
                self.awaiting = None;
                self.transcript.push(TranscriptEntry::Cts(k));
                Ok(())
            }
            _ => Err(TransportError::UnexpectedCts { got: token.chunk_index }),
        }
    }

    pub fn check_timeout(&self, now: Ticks) -> Result<(), TransportError> {
        match self.awaiting {
            Some((k, deadline)) if now > deadline => Err(TransportError::CtsTimeout { chunk_index: k }),
            _ => Ok(()),
        }
    }
}

/// Receiver half of a paced transfer. Chunks must arrive in order; the
/// buffer is discarded on abort.
#[derive(Debug, Clone)]
pub struct CtsReceiver {
    receiver: NodeId,
    expected_len: usize,
    next: u32,
    buffer: Vec<u8>,
}

impl CtsReceiver {
    pub fn new(receiver: NodeId, expected_len: usize) -> Self {
        CtsReceiver {
            receiver,
            expected_len,
            next: 0,
            buffer: Vec::with_capacity(expected_len),
        }
    }

    pub fn accept_chunk(&mut self, index: u32, data: &[u8]) -> Result<CtsToken, TransportError> {
        if index != self.next {
            return Err(TransportError::ChunkGap {
                expected: self.next,
                got: index,
            });
        }
        if self.buffer.len() + data.len() > self.expected_len {
            return Err(TransportError::Malformed("chunk overruns announced length"));
        }
        self.buffer.extend_from_slice(data);
        self.next += 1;
        Ok(CtsToken {
            chunk_index: index,
            receiver: self.receiver,
        })
    }

    pub fn received(&self) -> &[u8] {
        &self.buffer
    }

    pub fn is_complete(&self) -> bool {
        self.buffer.len() == self.expected_len
    }

    pub fn abort(&mut self) {
        self.buffer.clear();
        self.next = 0;
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.buffer
    }
}

/// Something that answers paced chunks.
pub trait CtsPeer {
    /// Returns the token, or `None` to withhold it.
    fn on_chunk(&mut self, index: u32, data: &[u8]) -> Option<CtsToken>;
    fn on_abort(&mut self);
}

impl CtsPeer for CtsReceiver {
    fn on_chunk(&mut self, index: u32, data: &[u8]) -> Option<CtsToken> {
        self.accept_chunk(index, data).ok()
    }

    fn on_abort(&mut self) {
        self.abort();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CtsTiming {
    pub window: Ticks,
    /// Time between releasing a chunk and the peer answering.
    pub round_trip: Ticks,
}

impl Default for CtsTiming {
    fn default() -> Self {
        CtsTiming {
            window: DEFAULT_CTS_TIMEOUT,
            round_trip: 1_000,
        }
    }
}

/// Run a complete paced transfer against `peer` on a local clock. On a
/// missing token the peer is told to abort and the timeout is returned.
pub fn stream_with_cts(
    payload: &[u8],
    chunk_size: usize,
    peer: &mut impl CtsPeer,
    timing: CtsTiming,
) -> Result<Vec<TranscriptEntry>, TransportError> {
    let mut sender = CtsSender::new(payload.to_vec(), chunk_size, timing.window)?;
    let mut now: Ticks = 0;
    while let Some((k, data)) = sender.next_chunk(now) {
        match peer.on_chunk(k, data) {
            Some(token) => {
                now += timing.round_trip;
                if let Err(e) = sender.on_cts(token, now) {
                    peer.on_abort();
                    return Err(e);
                }
            }
            None => {
                now += timing.window + 1;
                let err = sender.check_timeout(now).unwrap_err();
                peer.on_abort();
                return Err(err);
            }
        }
    }
    Ok(sender.transcript().to_vec())
}
