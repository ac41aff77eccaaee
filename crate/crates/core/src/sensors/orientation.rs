//! Tilt, tilt-compensated heading and arm-dependent soft-iron correction.
//!
//! Body axes: x forward, y right, z down. A level, resting accelerometer
//! reads `(0, 0, 1)` g. Heading is measured clockwise from magnetic north.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];

const DEGENERATE_FIELD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrientationError {
    #[error("gravity vector has zero length")]
    ZeroVector,
    #[error("horizontal field component vanishes; heading undefined")]
    DegenerateField,
    #[error("arm angle {0} outside [0, 90]")]
    AngleOutOfRange(f64),
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tilt {
    pub pitch: f64,
    pub roll: f64,
}

pub fn tilt_from_accel(g: Vec3) -> Result<Tilt, OrientationError> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(OrientationError::NonFinite);
    }
    let [gx, gy, gz] = g;
    if gx == 0.0 && gy == 0.0 && gz == 0.0 {
        return Err(OrientationError::ZeroVector);
    }
    Ok(Tilt {
        pitch: (-gx).atan2(gy.hypot(gz)).to_degrees(),
        roll: gy.atan2(gz).to_degrees(),
    })
}

/// Undo roll then pitch so the field lies in the local horizontal plane, then
/// take the bearing of its horizontal part.
pub fn tilt_compensated_heading(mag: Vec3, pitch: f64, roll: f64) -> Result<f64, OrientationError> {
    if mag.iter().chain([&pitch, &roll]).any(|v| !v.is_finite()) {
        return Err(OrientationError::NonFinite);
    }
    let [mx, my, mz] = mag;
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    // roll about x
    let y1 = my * cr - mz * sr;
    let z1 = my * sr + mz * cr;
    // pitch about y
    let x2 = mx * cp + z1 * sp;
    if x2.hypot(y1) < DEGENERATE_FIELD {
        return Err(OrientationError::DegenerateField);
    }
    let heading = (-y1).atan2(x2).to_degrees();
    let h = heading.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    Ok(if h >= 360.0 { 0.0 } else { h })
}

/// Soft-iron bias vectors measured against a free-field reference with the
/// arm fully raised and fully lowered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCalibration {
    pub bias_raised: Vec3,
    pub bias_lowered: Vec3,
    pub reference_free_field: Vec3,
}

impl BiasCalibration {
    /// Derive biases from the three reference readings taken at one spot.
    pub fn from_reference_readings(free_field: Vec3, raised: Vec3, lowered: Vec3) -> Self {
        BiasCalibration {
            bias_raised: sub(raised, free_field),
            bias_lowered: sub(lowered, free_field),
            reference_free_field: free_field,
        }
    }

    /// Bias linearly interpolated in arm angle, 0 = lowered, 90 = raised.
    pub fn bias_at(&self, arm_angle: f64) -> Result<Vec3, OrientationError> {
        if !(0.0..=90.0).contains(&arm_angle) {
            return Err(OrientationError::AngleOutOfRange(arm_angle));
        }
        let t = arm_angle / 90.0;
        let mut b = [0.0; 3];
        for (i, out) in b.iter_mut().enumerate() {
            *out = self.bias_lowered[i] + t * (self.bias_raised[i] - self.bias_lowered[i]);
        }
        Ok(b)
    }
}

pub fn soft_iron_correct(mag: Vec3, arm_angle: f64, cal: &BiasCalibration) -> Result<Vec3, OrientationError> {
    Ok(sub(mag, cal.bias_at(arm_angle)?))
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_and_axis_tilts() {
        let t = tilt_from_accel([0.0, 0.0, 1.0]).unwrap();
        assert_eq!((t.pitch, t.roll), (0.0, 0.0));
        assert_eq!(tilt_from_accel([0.0, 1.0, 0.0]).unwrap().roll, 90.0);
        assert_eq!(tilt_from_accel([-1.0, 0.0, 0.0]).unwrap().pitch, 90.0);
        assert_eq!(tilt_from_accel([0.0; 3]), Err(OrientationError::ZeroVector));
    }

    #[test]
    fn level_headings() {
        for z in [-40.0, 0.0, 55.5] {
            assert_eq!(tilt_compensated_heading([1.0, 0.0, z], 0.0, 0.0).unwrap(), 0.0);
        }
        assert!((tilt_compensated_heading([0.0, -1.0, 0.0], 0.0, 0.0).unwrap() - 90.0).abs() < 1e-12);
        assert!((tilt_compensated_heading([-1.0, 0.0, 0.0], 0.0, 0.0).unwrap() - 180.0).abs() < 1e-12);
        assert!((tilt_compensated_heading([0.0, 1.0, 0.0], 0.0, 0.0).unwrap() - 270.0).abs() < 1e-12);
        assert_eq!(
            tilt_compensated_heading([0.0, 0.0, 30.0], 0.0, 0.0),
            Err(OrientationError::DegenerateField)
        );
    }

    #[test]
    fn bias_endpoints_and_midpoint() {
        let cal = BiasCalibration {
            bias_raised: [10.0, -4.0, 2.0],
            bias_lowered: [2.0, 0.0, -6.0],
            reference_free_field: [20.0, 1.0, -40.0],
        };
        let m = [30.0, 30.0, 30.0];
        assert_eq!(soft_iron_correct(m, 90.0, &cal).unwrap(), [20.0, 34.0, 28.0]);
        assert_eq!(soft_iron_correct(m, 0.0, &cal).unwrap(), [28.0, 30.0, 36.0]);
        assert_eq!(soft_iron_correct(m, 45.0, &cal).unwrap(), [24.0, 32.0, 32.0]);
        assert_eq!(
            soft_iron_correct(m, 91.0, &cal),
            Err(OrientationError::AngleOutOfRange(91.0))
        );
        assert!(soft_iron_correct(m, -0.5, &cal).is_err());
    }

    #[test]
    fn calibration_from_references() {
        let cal = BiasCalibration::from_reference_readings([1.0, 2.0, 3.0], [4.0, 4.0, 4.0], [0.0, 0.0, 0.0]);
        assert_eq!(cal.bias_raised, [3.0, 2.0, 1.0]);
        assert_eq!(cal.bias_lowered, [-1.0, -2.0, -3.0]);
    }
}
