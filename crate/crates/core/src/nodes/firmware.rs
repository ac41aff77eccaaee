//! Firmware images and the target side of a reflash session.
//!
//! A node's behavior is chosen from the set compiled into the simulator;
//! the image bytes only travel so that size limits and checksums apply.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Frame, NodeId};
use crate::ids;
use crate::transport::{crc16, CtsReceiver, CtsToken, TransportError};

pub const FLASH_BYTES: usize = 8192;
/// Bytes released per clear-to-send during a reflash.
pub const REFLASH_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FirmwareError {
    #[error("image of {0} bytes exceeds {FLASH_BYTES} bytes of flash")]
    ImageTooLarge(usize),
    #[error("image checksum {actual:#06x} does not match expected {expected:#06x}")]
    CrcMismatch { expected: u16, actual: u16 },
    #[error("node is not in its normal mode")]
    NotNormal,
    #[error("node is not in the reflash loop")]
    NotReflashing,
    #[error("unknown behavior code {0}")]
    UnknownBehavior(u8),
    #[error("malformed reflash command")]
    Malformed,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    SensorSuite,
    Logger,
    CameraWithLoggerFallback,
    Uplink,
    SmsModem,
    Outputs,
    Gps,
}

impl Behavior {
    pub fn code(self) -> u8 {
        match self {
            Behavior::SensorSuite => 1,
            Behavior::Logger => 2,
            Behavior::CameraWithLoggerFallback => 3,
            Behavior::Uplink => 4,
            Behavior::SmsModem => 5,
            Behavior::Outputs => 6,
            Behavior::Gps => 7,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, FirmwareError> {
        Ok(match c {
            1 => Behavior::SensorSuite,
            2 => Behavior::Logger,
            3 => Behavior::CameraWithLoggerFallback,
            4 => Behavior::Uplink,
            5 => Behavior::SmsModem,
            6 => Behavior::Outputs,
            7 => Behavior::Gps,
            c => return Err(FirmwareError::UnknownBehavior(c)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareImage {
    pub bytes: Vec<u8>,
    pub version: u16,
    pub behavior: Behavior,
}

impl FirmwareImage {
    pub fn new(bytes: Vec<u8>, version: u16, behavior: Behavior) -> Result<Self, FirmwareError> {
        if bytes.len() > FLASH_BYTES {
            return Err(FirmwareError::ImageTooLarge(bytes.len()));
        }
        Ok(FirmwareImage {
            bytes,
            version,
            behavior,
        })
    }

    /// Deterministic filler bytes standing in for compiled code.
    pub fn synthetic(behavior: Behavior, version: u16, size: usize) -> Result<Self, FirmwareError> {
        let mut rng = ChaCha8Rng::seed_from_u64(((behavior.code() as u64) << 16) | version as u64);
        let mut bytes = vec![0; size];
        rng.fill_bytes(&mut bytes);
        Self::new(bytes, version, behavior)
    }

    pub fn crc(&self) -> u16 {
        crc16(&self.bytes)
    }

    pub fn announce(&self, target: NodeId) -> ImageAnnounce {
        ImageAnnounce {
            target,
            behavior: self.behavior,
            version: self.version,
            size: self.bytes.len() as u16,
            crc: self.crc(),
        }
    }
}

/// Check a staged image against the checksum recorded when it was stored.
pub fn verify_image(image: &FirmwareImage, expected_crc: u16) -> Result<(), FirmwareError> {
    let actual = image.crc();
    if actual != expected_crc {
        return Err(FirmwareError::CrcMismatch {
            expected: expected_crc,
            actual,
        });
    }
    Ok(())
}

/// `[target:1][behavior:1][version:2 LE][size:2 LE][crc:2 LE]`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageAnnounce {
    pub target: NodeId,
    pub behavior: Behavior,
    pub version: u16,
    pub size: u16,
    pub crc: u16,
}

impl ImageAnnounce {
    pub fn to_frame(&self, source: NodeId) -> Frame {
        let mut p = [0u8; 8];
        p[0] = self.target.0;
        p[1] = self.behavior.code();
        p[2..4].copy_from_slice(&self.version.to_le_bytes());
        p[4..6].copy_from_slice(&self.size.to_le_bytes());
        p[6..8].copy_from_slice(&self.crc.to_le_bytes());
        Frame::new(ids::std_id(ids::CMD_REFLASH_ENTER), &p, source).expect("8 bytes")
    }

    pub fn from_payload(p: &[u8]) -> Result<Self, FirmwareError> {
        if p.len() != 8 {
            return Err(FirmwareError::Malformed);
        }
        let size = u16::from_le_bytes([p[4], p[5]]);
        if size as usize > FLASH_BYTES {
            return Err(FirmwareError::ImageTooLarge(size as usize));
        }
        Ok(ImageAnnounce {
            target: NodeId(p[0]),
            behavior: Behavior::from_code(p[1])?,
            version: u16::from_le_bytes([p[2], p[3]]),
            size,
            crc: u16::from_le_bytes([p[6], p[7]]),
        })
    }
}

/// Target-side buffer of an in-progress reflash. Chunks are reassembled
/// from their 4-byte frames and acknowledged one chunk at a time.
#[derive(Debug, Clone)]
pub struct ReflashSession {
    pub announce: ImageAnnounce,
    receiver: CtsReceiver,
    chunk: Vec<u8>,
    chunk_index: u32,
}

impl ReflashSession {
    pub fn new(announce: ImageAnnounce) -> Self {
        ReflashSession {
            announce,
            receiver: CtsReceiver::new(announce.target, announce.size as usize),
            chunk: Vec::with_capacity(REFLASH_CHUNK),
            chunk_index: 0,
        }
    }

    fn chunk_len(&self, k: u32) -> usize {
        let start = k as usize * REFLASH_CHUNK;
        (self.announce.size as usize).saturating_sub(start).min(REFLASH_CHUNK)
    }

    /// Take one data frame `(frame_index, data)`; returns a token when the
    /// frame completes a chunk.
    pub fn apply_frame(&mut self, frame_index: u32, data: &[u8]) -> Result<Option<CtsToken>, FirmwareError> {
        let per_chunk = (REFLASH_CHUNK / 4) as u32;
        let k = frame_index / per_chunk;
        let expected_frame = self.chunk_index * per_chunk + (self.chunk.len() / 4) as u32;
        if k < self.chunk_index || (k == self.chunk_index && frame_index < expected_frame) {
            // stale duplicate of something already accepted
            return Ok(None);
        }
        if frame_index != expected_frame {
            return Err(TransportError::ChunkGap {
                expected: self.chunk_index,
                got: k,
            }
            .into());
        }
        self.chunk.extend_from_slice(data);
        if self.chunk.len() < self.chunk_len(k) {
            return Ok(None);
        }
        let token = self.receiver.accept_chunk(k, &self.chunk)?;
        self.chunk.clear();
        self.chunk_index += 1;
        Ok(Some(token))
    }

    pub fn is_complete(&self) -> bool {
        self.receiver.is_complete()
    }

    /// Verify the received bytes and build the new image.
    pub fn finalize(self) -> Result<FirmwareImage, FirmwareError> {
        if !self.receiver.is_complete() {
            return Err(FirmwareError::Malformed);
        }
        let bytes = self.receiver.into_payload();
        let image = FirmwareImage::new(bytes, self.announce.version, self.announce.behavior)?;
        verify_image(&image, self.announce.crc)?;
        Ok(image)
    }
}
