//! H-bridge outputs, the solar-panel arm, Peltier regulation and the
//! two-battery power model with its brown-out thresholds.

use dori::nodes::outputs::{thermal_regulate, ArmActuator, Device, HBridgeState, MotionCommand, OutputBank};
use dori::nodes::power::{power_step, PowerState, Rails, BROWN_OUT_VOLTS, WAKE_VOLTS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut bank = OutputBank::standard(2);
    for (d, c) in [
        (Device::DriveLeft, MotionCommand::Forward),
        (Device::Peltier(1), MotionCommand::Reverse),
    ] {
        let s = bank.hbridge_set(&d, c)?;
        println!("{d:?} {c:?}: {s:?} -> {:?}", s.motion());
    }
    println!(
        "stop leaves the bridge {:?}",
        HBridgeState::for_command(MotionCommand::Stop).motion()
    );

    let mut arm = ArmActuator::new(4.5, 0.0);
    arm.set_command(MotionCommand::Forward, 0);
    for t in [0, 5, 10, 20, 30] {
        println!("arm at {t:>2} s: {:.1} deg", arm.angle_at(t * 1_000_000));
    }

    for temp in [2.0, 10.0, 19.0] {
        println!("peltier at {temp:>4.1} C -> {:?}", thermal_regulate(temp, (5.0, 15.0))?);
    }

    let mut p = PowerState::new(2.0, 0.9, 0.9, 0.1);
    let load = Rails {
        logic: 6.0,
        power: 30.0,
    };
    let mut t = 0.0;
    while t < 3600.0 {
        let (next, events) = power_step(&p, load, Rails::default(), 60_000_000);
        p = next;
        t += 60.0;
        for e in events {
            println!("{:>5.0} s: {e:?}", t);
        }
    }
    println!(
        "after an hour logic {:.2} V, power {:.2} V (brown-out {BROWN_OUT_VOLTS} V, wake {WAKE_VOLTS} V)",
        p.battery_logic(),
        p.battery_power()
    );
    p.bridge();
    println!("bridged: logic {:.2} V", p.battery_logic());
    Ok(())
}
