//! Sensor processing: readings and their bus encoding, plus the per-sensor
//! math and protocol decoders.

mod nmea;
mod onewire;
mod orientation;
mod ranging;
mod segments;
mod weather;
mod wind;

pub use nmea::{average_position, format_rmc, parse_nmea_rmc, NmeaError, RmcFix};
pub use onewire::{onewire_search, OneWireId, OneWireNetwork, SearchOutcome};
pub use orientation::{
    soft_iron_correct, tilt_compensated_heading, tilt_from_accel, BiasCalibration, OrientationError, Tilt, Vec3,
};
pub use ranging::{speed_of_sound, ultrasonic_distance, RangingError};
pub use segments::{decode_segments, glyph_mask, DisplayValue, SegmentError, SegmentPattern};
pub use weather::{rain_heater_on, RainGauge};
pub use wind::{wind_speed, WindError, WindTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Frame, FrameId, NodeId};
use crate::ids::{self, MessageClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReadingError {
    #[error("{kind:?} value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        kind: SensorKind,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("frame {0} is not a sensor reading")]
    NotASensorFrame(FrameId),
    #[error("sensor code {0:#04x} is not allocated")]
    UnknownSensor(u8),
    #[error("{kind:?} payload must be {expected} bytes, got {got}")]
    PayloadLength {
        kind: SensorKind,
        expected: usize,
        got: usize,
    },
    #[error("{kind:?} expects a {expected} value")]
    WrongShape { kind: SensorKind, expected: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    /// degrees C
    Temperature,
    /// kPa
    Pressure,
    /// percent relative humidity
    Humidity,
    /// m/s
    Wind,
    /// bucket tips
    Rainfall,
    Ph,
    /// relative units only
    Smoke,
    /// meters
    Distance,
    /// g
    Accel,
    /// microtesla
    Mag,
    /// degrees per second
    Gyro,
    /// logic and power rail, volts
    Battery,
    /// degrees
    ArmAngle,
}

impl SensorKind {
    pub const ALL: [SensorKind; 13] = [
        SensorKind::Temperature,
        SensorKind::Pressure,
        SensorKind::Humidity,
        SensorKind::Wind,
        SensorKind::Rainfall,
        SensorKind::Ph,
        SensorKind::Smoke,
        SensorKind::Distance,
        SensorKind::Accel,
        SensorKind::Mag,
        SensorKind::Gyro,
        SensorKind::Battery,
        SensorKind::ArmAngle,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code.checked_sub(1)? as usize).copied()
    }

    pub fn frame_id(self) -> FrameId {
        ids::std_id(ids::SENSOR_BASE | self.code() as u32)
    }

    /// Physical range of the instrument, if bounded.
    pub fn range(self) -> Option<(f64, f64)> {
        match self {
            SensorKind::ArmAngle => Some((0.0, 90.0)),
            SensorKind::Humidity => Some((10.0, 95.0)),
            SensorKind::Ph => Some((0.0, 14.0)),
            _ => None,
        }
    }

    pub fn is_vector(self) -> bool {
        matches!(self, SensorKind::Accel | SensorKind::Mag | SensorKind::Gyro)
    }

    /// Fixed-point scale used for vector axes on the wire.
    fn axis_scale(self) -> f64 {
        match self {
            SensorKind::Accel => 1000.0,
            _ => 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensorValue {
    Scalar(f64),
    Vector(Vec3),
    Count(u32),
    Rails { logic: f64, power: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub timestamp_us: u64,
    pub source: NodeId,
    pub kind: SensorKind,
    pub value: SensorValue,
}

impl SensorReading {
    pub fn new(timestamp_us: u64, source: NodeId, kind: SensorKind, value: SensorValue) -> Result<Self, ReadingError> {
        let shape_ok = match (kind, &value) {
            (SensorKind::Rainfall, SensorValue::Count(_)) => true,
            (SensorKind::Battery, SensorValue::Rails { .. }) => true,
            (k, SensorValue::Vector(_)) => k.is_vector(),
            (k, SensorValue::Scalar(_)) => !k.is_vector() && k != SensorKind::Rainfall && k != SensorKind::Battery,
            _ => false,
        };
        if !shape_ok {
            return Err(ReadingError::WrongShape {
                kind,
                expected: expected_shape(kind),
            });
        }
        if let (Some((lo, hi)), SensorValue::Scalar(v)) = (kind.range(), &value) {
            if !(lo..=hi).contains(v) {
                return Err(ReadingError::OutOfRange {
                    kind,
                    value: *v,
                    lo,
                    hi,
                });
            }
        }
        Ok(SensorReading {
            timestamp_us,
            source,
            kind,
            value,
        })
    }

    pub fn timestamp_secs(&self) -> f64 {
        self.timestamp_us as f64 / 1e6
    }

    pub fn to_frame(&self) -> Frame {
        Frame::new(self.kind.frame_id(), &encode_value(self.kind, &self.value), self.source)
            .expect("sensor payload fits a frame")
    }

    /// Decode a reading frame; the timestamp comes from whoever observed it.
    pub fn from_frame(frame: &Frame, timestamp_us: u64) -> Result<Self, ReadingError> {
        let MessageClass::Sensor(code) = ids::classify(frame.id()) else {
            return Err(ReadingError::NotASensorFrame(frame.id()));
        };
        let kind = SensorKind::from_code(code).ok_or(ReadingError::UnknownSensor(code))?;
        let value = decode_value(kind, frame.payload())?;
        Ok(SensorReading {
            timestamp_us,
            source: frame.source(),
            kind,
            value,
        })
    }

    /// The value exactly as it will survive a trip over the bus.
    pub fn quantized(&self) -> Self {
        let value = decode_value(self.kind, &encode_value(self.kind, &self.value)).expect("own encoding decodes");
        SensorReading { value, ..self.clone() }
    }
}

fn expected_shape(kind: SensorKind) -> &'static str {
    match kind {
        SensorKind::Rainfall => "count",
        SensorKind::Battery => "rails",
        k if k.is_vector() => "vector",
        _ => "scalar",
    }
}

fn encode_value(kind: SensorKind, value: &SensorValue) -> Vec<u8> {
    match *value {
        SensorValue::Scalar(v) => (v as f32).to_le_bytes().to_vec(),
        SensorValue::Count(n) => n.to_le_bytes().to_vec(),
        SensorValue::Vector(v) => {
            let s = kind.axis_scale();
            v.iter()
                .flat_map(|a| ((a * s).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes())
                .collect()
        }
        SensorValue::Rails { logic, power } => [logic, power]
            .iter()
            .flat_map(|v| ((v * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16).to_le_bytes())
            .collect(),
    }
}

fn decode_value(kind: SensorKind, p: &[u8]) -> Result<SensorValue, ReadingError> {
    let need = |n: usize| {
        if p.len() == n {
            Ok(())
        } else {
            Err(ReadingError::PayloadLength {
                kind,
                expected: n,
                got: p.len(),
            })
        }
    };
    Ok(match kind {
        SensorKind::Rainfall => {
            need(4)?;
            SensorValue::Count(u32::from_le_bytes(p.try_into().unwrap()))
        }
        SensorKind::Battery => {
            need(4)?;
            let logic = u16::from_le_bytes([p[0], p[1]]) as f64 / 1000.0;
            let power = u16::from_le_bytes([p[2], p[3]]) as f64 / 1000.0;
            SensorValue::Rails { logic, power }
        }
        k if k.is_vector() => {
            need(6)?;
            let s = k.axis_scale();
            let axis = |i: usize| i16::from_le_bytes([p[2 * i], p[2 * i + 1]]) as f64 / s;
            SensorValue::Vector([axis(0), axis(1), axis(2)])
        }
        _ => {
            need(4)?;
            SensorValue::Scalar(f32::from_le_bytes(p.try_into().unwrap()) as f64)
        }
    })
}
