//! Site numbering between drive commands, the arm position history and
//! magnetometer normalization against it.

use serde::Serialize;

use super::GatewayError;
use crate::bus::NodeId;
use crate::sensors::{average_position, soft_iron_correct, BiasCalibration, SensorReading, SensorValue, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Site {
    pub site_id: u32,
    /// unix seconds
    pub start_time: f64,
    /// `None` while the instrument is still there.
    pub end_time: Option<f64>,
    pub mean_position: Option<(f64, f64)>,
}

impl Site {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_time && self.end_time.is_none_or(|e| t < e)
    }
}

/// Consecutive half-open intervals, numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteLog {
    sites: Vec<Site>,
}

impl SiteLog {
    pub fn new(start_time: f64) -> Self {
        SiteLog {
            sites: vec![Site {
                site_id: 1,
                start_time,
                end_time: None,
                mean_position: None,
            }],
        }
    }

    pub fn current(&self) -> &Site {
        self.sites.last().expect("never empty")
    }

    /// Close the current site and open the next. A command stamped before
    /// the current site began is treated as arriving at its start.
    pub fn register_drive_command(&mut self, time: f64) -> &Site {
        let cur = self.sites.last_mut().expect("never empty");
        let t = time.max(cur.start_time);
        cur.end_time = Some(t);
        let id = cur.site_id + 1;
        self.sites.push(Site {
            site_id: id,
            start_time: t,
            end_time: None,
            mean_position: None,
        });
        self.current()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site_at(&self, t: f64) -> Option<u32> {
        self.sites.iter().find(|s| s.contains(t)).map(|s| s.site_id)
    }

    /// Set each site's mean position from fixes `(unix s, lat, lon)`.
    pub fn attribute_fixes(&mut self, fixes: &[(f64, f64, f64)]) {
        for s in &mut self.sites {
            let own: Vec<(f64, f64)> = fixes
                .iter()
                .filter(|(t, _, _)| s.contains(*t))
                .map(|(_, la, lo)| (*la, *lo))
                .collect();
            s.mean_position = average_position(&own).ok();
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArmTimeline {
    samples: Vec<(u64, f64)>,
}

impl ArmTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, timestamp_us: u64, angle: f64) -> Result<(), GatewayError> {
        if self.samples.last().is_some_and(|(t, _)| *t >= timestamp_us) {
            return Err(GatewayError::TimelineOrder(timestamp_us));
        }
        self.samples.push((timestamp_us, angle));
        Ok(())
    }

    /// Build from arm-angle readings in any order; repeated timestamps keep
    /// the first.
    pub fn from_readings<'a>(readings: impl IntoIterator<Item = &'a SensorReading>) -> Self {
        let mut s: Vec<(u64, f64)> = readings
            .into_iter()
            .filter_map(|r| match r.value {
                SensorValue::Scalar(a) if r.kind == crate::sensors::SensorKind::ArmAngle => Some((r.timestamp_us, a)),
                _ => None,
            })
            .collect();
        s.sort_by_key(|(t, _)| *t);
        s.dedup_by_key(|(t, _)| *t);
        ArmTimeline { samples: s }
    }

    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    /// Linear in time between samples, nearest sample outside them.
    pub fn angle_at(&self, timestamp_us: u64) -> Option<f64> {
        let s = &self.samples;
        let first = s.first()?;
        if timestamp_us <= first.0 {
            return Some(first.1);
        }
        let last = s[s.len() - 1];
        if timestamp_us >= last.0 {
            return Some(last.1);
        }
        let i = s.partition_point(|(t, _)| *t <= timestamp_us);
        let (t0, a0) = s[i - 1];
        let (t1, a1) = s[i];
        if t0 == timestamp_us {
            return Some(a0);
        }
        let f = (timestamp_us - t0) as f64 / (t1 - t0) as f64;
        Some(a0 + f * (a1 - a0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedMag {
    pub timestamp_us: u64,
    pub source: NodeId,
    pub raw: Vec3,
    pub arm_angle: Option<f64>,
    /// Absent when no calibration or arm history was available.
    pub corrected: Option<Vec3>,
}

pub fn normalize_magnetometer(
    reading: &SensorReading,
    arm: &ArmTimeline,
    cal: Option<&BiasCalibration>,
) -> Result<NormalizedMag, GatewayError> {
    let SensorValue::Vector(raw) = reading.value else {
        return Err(GatewayError::NotMagnetometer);
    };
    let cal = cal.ok_or(GatewayError::MissingCalibration)?;
    let angle = arm.angle_at(reading.timestamp_us).ok_or(GatewayError::NoArmHistory)?;
    let corrected = soft_iron_correct(raw, angle.clamp(0.0, 90.0), cal).expect("angle clamped");
    Ok(NormalizedMag {
        timestamp_us: reading.timestamp_us,
        source: reading.source,
        raw,
        arm_angle: Some(angle),
        corrected: Some(corrected),
    })
}

/// Normalize when possible, otherwise keep the raw value with the correction
/// marked absent.
pub fn normalize_or_raw(reading: &SensorReading, arm: &ArmTimeline, cal: Option<&BiasCalibration>) -> NormalizedMag {
    normalize_magnetometer(reading, arm, cal).unwrap_or_else(|_| NormalizedMag {
        timestamp_us: reading.timestamp_us,
        source: reading.source,
        raw: match reading.value {
            SensorValue::Vector(v) => v,
            _ => [f64::NAN; 3],
        },
        arm_angle: arm.angle_at(reading.timestamp_us),
        corrected: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::SensorKind;

    #[test]
    fn numbering_from_one() {
        let mut log = SiteLog::new(0.0);
        assert_eq!(log.current().site_id, 1);
        assert_eq!(log.register_drive_command(10.0).site_id, 2);
        log.register_drive_command(20.0);
        log.register_drive_command(30.0);
        assert_eq!(log.sites().len(), 4);
        assert_eq!(log.sites()[0].end_time, Some(10.0));
        assert_eq!(log.site_at(9.99), Some(1));
        assert_eq!(log.site_at(10.0), Some(2));
        assert_eq!(log.site_at(1e9), Some(4));
    }

    #[test]
    fn timeline_interpolation() {
        let mut t = ArmTimeline::new();
        t.push(0, 0.0).unwrap();
        t.push(10, 90.0).unwrap();
        assert!(t.push(10, 45.0).is_err());
        assert_eq!(t.angle_at(5), Some(45.0));
        assert_eq!(t.angle_at(20), Some(90.0));
        assert_eq!(ArmTimeline::new().angle_at(3), None);
    }

    #[test]
    fn missing_calibration() {
        let r = SensorReading::new(3, NodeId(2), SensorKind::Mag, SensorValue::Vector([1.0, 2.0, 3.0])).unwrap();
        let mut t = ArmTimeline::new();
        t.push(0, 45.0).unwrap();
        assert_eq!(
            normalize_magnetometer(&r, &t, None),
            Err(GatewayError::MissingCalibration)
        );
        let kept = normalize_or_raw(&r, &t, None);
        assert_eq!(kept.raw, [1.0, 2.0, 3.0]);
        assert_eq!(kept.corrected, None);
    }
}
