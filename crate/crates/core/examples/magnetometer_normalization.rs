//! Remove the arm-dependent hard-iron bias from magnetometer readings.

use dori::bus::NodeId;
use dori::gateway::{normalize_magnetometer, ArmTimeline};
use dori::sensors::{BiasCalibration, SensorKind, SensorReading, SensorValue};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cal = BiasCalibration {
        bias_raised: [3.0, -1.5, 0.5],
        bias_lowered: [12.0, 4.0, -6.0],
        reference_free_field: [19.0, 2.0, 48.0],
    };
    // arm swept from lowered to raised over 20 s
    let mut arm = ArmTimeline::new();
    arm.push(0, 0.0)?;
    arm.push(20_000_000, 90.0)?;
    for t_s in [0u64, 5, 10, 20] {
        let angle = t_s as f64 * 4.5;
        let f = angle / 90.0;
        let raw: [f64; 3] = std::array::from_fn(|i| {
            cal.reference_free_field[i] + cal.bias_lowered[i] + f * (cal.bias_raised[i] - cal.bias_lowered[i])
        });
        let r = SensorReading::new(t_s * 1_000_000, NodeId(3), SensorKind::Mag, SensorValue::Vector(raw))?;
        let n = normalize_magnetometer(&r, &arm, Some(&cal))?;
        println!(
            "t={t_s:>2} s arm {:>4.1} deg raw {:?} -> {:?}",
            n.arm_angle.unwrap_or(f64::NAN),
            raw,
            n.corrected
        );
    }
    Ok(())
}
