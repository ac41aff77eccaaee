//! Heading from a tilted magnetometer, with pitch and roll taken from the
//! accelerometer's gravity vector.

use dori::sensors::{tilt_compensated_heading, tilt_from_accel};

/// Field seen by a body at the given attitude; 20 uT north, 45 uT down.
fn body_field(heading: f64, pitch: f64, roll: f64) -> [f64; 3] {
    let (sh, ch) = heading.to_radians().sin_cos();
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    let (lx, ly, lz) = (20.0 * ch, -20.0 * sh, 45.0);
    let (x, z1) = (lx * cp - lz * sp, lx * sp + lz * cp);
    [x, ly * cr + z1 * sr, -ly * sr + z1 * cr]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (heading, pitch, roll) in [(0.0, 0.0, 0.0), (123.4, 10.0, -5.0), (270.0, -25.0, 30.0)] {
        let (sp, cp) = f64::sin_cos(f64::to_radians(pitch));
        let (sr, cr) = f64::sin_cos(f64::to_radians(roll));
        let tilt = tilt_from_accel([-sp, cp * sr, cp * cr])?;
        let mag = body_field(heading, pitch, roll);
        let naive = ((-mag[1]).atan2(mag[0]).to_degrees() + 360.0) % 360.0;
        let got = (tilt_compensated_heading(mag, tilt.pitch, tilt.roll)? + 360.0) % 360.0;
        println!(
            "true {heading:>6.1}  pitch {:>6.1} roll {:>6.1}  uncompensated {naive:>6.1}  compensated {got:>6.1}",
            tilt.pitch, tilt.roll
        );
    }
    Ok(())
}
