//! Relay H-bridges, the arm's linear actuator and Peltier regulation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::Ticks;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutputError {
    #[error("no output device {0}")]
    UnknownDevice(String),
    #[error("thermal band [{lo}, {hi}] is empty")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("unknown motion code {0}")]
    UnknownCommand(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionCommand {
    Forward,
    Reverse,
    Stop,
}

impl MotionCommand {
    pub fn code(self) -> u8 {
        match self {
            MotionCommand::Stop => 0,
            MotionCommand::Forward => 1,
            MotionCommand::Reverse => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, OutputError> {
        match c {
            0 => Ok(MotionCommand::Stop),
            1 => Ok(MotionCommand::Forward),
            2 => Ok(MotionCommand::Reverse),
            c => Err(OutputError::UnknownCommand(c)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HBridgeState {
    pub relay_a: bool,
    pub relay_b: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Off,
    Forward,
    Reverse,
    Brake,
}

impl HBridgeState {
    pub fn for_command(cmd: MotionCommand) -> Self {
        match cmd {
            MotionCommand::Forward => HBridgeState {
                relay_a: true,
                relay_b: false,
            },
            MotionCommand::Reverse => HBridgeState {
                relay_a: false,
                relay_b: true,
            },
            MotionCommand::Stop => HBridgeState::default(),
        }
    }

    pub fn motion(self) -> Motion {
        match (self.relay_a, self.relay_b) {
            (false, false) => Motion::Off,
            (true, false) => Motion::Forward,
            (false, true) => Motion::Reverse,
            (true, true) => Motion::Brake,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Device {
    DriveLeft,
    DriveRight,
    LinearActuator,
    Peltier(u8),
}

impl Device {
    /// Single-byte code used in output commands on the bus.
    pub fn code(&self) -> u8 {
        match self {
            Device::DriveLeft => 0,
            Device::DriveRight => 1,
            Device::LinearActuator => 2,
            Device::Peltier(n) => 0x10 + n,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, OutputError> {
        match c {
            0 => Ok(Device::DriveLeft),
            1 => Ok(Device::DriveRight),
            2 => Ok(Device::LinearActuator),
            0x10..=0x1F => Ok(Device::Peltier(c - 0x10)),
            c => Err(OutputError::UnknownDevice(format!("code {c:#04x}"))),
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Device::DriveLeft => f.write_str("drive_left"),
            Device::DriveRight => f.write_str("drive_right"),
            Device::LinearActuator => f.write_str("linear_actuator"),
            Device::Peltier(n) => write!(f, "peltier_{n}"),
        }
    }
}

impl std::str::FromStr for Device {
    type Err = OutputError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drive_left" => Ok(Device::DriveLeft),
            "drive_right" => Ok(Device::DriveRight),
            "linear_actuator" => Ok(Device::LinearActuator),
            _ => s
                .strip_prefix("peltier_")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| *n < 16)
                .map(Device::Peltier)
                .ok_or_else(|| OutputError::UnknownDevice(s.to_string())),
        }
    }
}

/// The relay pairs wired to one outputs node.
#[derive(Debug, Clone, Default)]
pub struct OutputBank {
    bridges: BTreeMap<Device, HBridgeState>,
}

impl OutputBank {
    pub fn new(devices: impl IntoIterator<Item = Device>) -> Self {
        OutputBank {
            bridges: devices.into_iter().map(|d| (d, HBridgeState::default())).collect(),
        }
    }

    /// Drive and actuator bridges plus `peltiers` heat pumps.
    pub fn standard(peltiers: u8) -> Self {
        let mut v = vec![Device::DriveLeft, Device::DriveRight, Device::LinearActuator];
        v.extend((0..peltiers).map(Device::Peltier));
        Self::new(v)
    }

    pub fn hbridge_set(&mut self, device: &Device, cmd: MotionCommand) -> Result<HBridgeState, OutputError> {
        let slot = self
            .bridges
            .get_mut(device)
            .ok_or_else(|| OutputError::UnknownDevice(device.to_string()))?;
        *slot = HBridgeState::for_command(cmd);
        Ok(*slot)
    }

    pub fn state(&self, device: &Device) -> Option<HBridgeState> {
        self.bridges.get(device).copied()
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> {
        self.bridges.keys()
    }
}

/// Arm position driven by the linear actuator, integrated lazily between
/// command changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmActuator {
    /// degrees per second
    pub rate: f64,
    angle: f64,
    since: Ticks,
    command: MotionCommand,
}

pub const ARM_MIN: f64 = 0.0;
pub const ARM_MAX: f64 = 90.0;

impl ArmActuator {
    pub fn new(rate: f64, angle: f64) -> Self {
        ArmActuator {
            rate,
            angle: angle.clamp(ARM_MIN, ARM_MAX),
            since: 0,
            command: MotionCommand::Stop,
        }
    }

    /// Forward raises the arm.
    pub fn angle_at(&self, now: Ticks) -> f64 {
        let dt = now.saturating_sub(self.since) as f64 / 1e6;
        let delta = match self.command {
            MotionCommand::Forward => self.rate * dt,
            MotionCommand::Reverse => -self.rate * dt,
            MotionCommand::Stop => 0.0,
        };
        (self.angle + delta).clamp(ARM_MIN, ARM_MAX)
    }

    pub fn command(&self) -> MotionCommand {
        self.command
    }

    pub fn set_command(&mut self, cmd: MotionCommand, now: Ticks) {
        self.angle = self.angle_at(now);
        self.since = now.max(self.since);
        self.command = cmd;
    }
}

/// Threshold control with no hysteresis: above the band cools, below heats.
/// Forward drives the module in its cooling direction.
pub fn thermal_regulate(device_temp: f64, band: (f64, f64)) -> Result<MotionCommand, OutputError> {
    let (lo, hi) = band;
    if !(lo < hi) {
        return Err(OutputError::InvalidBand { lo, hi });
    }
    Ok(if device_temp > hi {
        MotionCommand::Forward
    } else if device_temp < lo {
        MotionCommand::Reverse
    } else {
        MotionCommand::Stop
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relay_table() {
        let mut bank = OutputBank::standard(2);
        let s = bank.hbridge_set(&Device::DriveLeft, MotionCommand::Forward).unwrap();
        assert_eq!((s.relay_a, s.relay_b), (true, false));
        let s = bank.hbridge_set(&Device::DriveLeft, MotionCommand::Reverse).unwrap();
        assert_eq!(s.motion(), Motion::Reverse);
        let s = bank.hbridge_set(&Device::DriveLeft, MotionCommand::Stop).unwrap();
        assert_eq!((s.relay_a, s.relay_b), (false, false));
        assert_eq!(
            HBridgeState {
                relay_a: true,
                relay_b: true
            }
            .motion(),
            Motion::Brake
        );
        assert!(matches!(
            bank.hbridge_set(&Device::Peltier(5), MotionCommand::Forward),
            Err(OutputError::UnknownDevice(_))
        ));
    }

    #[test]
    fn device_names() {
        for d in [
            Device::DriveLeft,
            Device::DriveRight,
            Device::LinearActuator,
            Device::Peltier(3),
        ] {
            assert_eq!(d.to_string().parse::<Device>().unwrap(), d);
            assert_eq!(Device::from_code(d.code()).unwrap(), d);
        }
        assert!("winch".parse::<Device>().is_err());
    }

    #[test]
    fn actuator_reaches_and_holds_limit() {
        let rate = 7.5;
        let mut arm = ArmActuator::new(rate, 0.0);
        arm.set_command(MotionCommand::Forward, 0);
        let full = (90.0 / rate * 1e6) as Ticks;
        assert_eq!(arm.angle_at(full), 90.0);
        assert_eq!(arm.angle_at(full * 3), 90.0);
        assert_eq!(arm.angle_at(full / 2), 45.0);
        arm.set_command(MotionCommand::Reverse, full * 3);
        assert_eq!(arm.angle_at(full * 3 + full / 3), 60.0);
        arm.set_command(MotionCommand::Stop, full * 3 + full / 3);
        assert_eq!(arm.angle_at(full * 10), 60.0);
    }

    #[test]
    fn thermal_thresholds() {
        assert_eq!(thermal_regulate(20.0, (10.0, 30.0)).unwrap(), MotionCommand::Stop);
        assert_eq!(thermal_regulate(30.0, (10.0, 30.0)).unwrap(), MotionCommand::Stop);
        assert_eq!(thermal_regulate(31.0, (10.0, 30.0)).unwrap(), MotionCommand::Forward);
        assert_eq!(thermal_regulate(9.0, (10.0, 30.0)).unwrap(), MotionCommand::Reverse);
        assert!(thermal_regulate(0.0, (5.0, 5.0)).is_err());
    }
}
