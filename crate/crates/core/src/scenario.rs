//! Scenario files: the instrument's nodes and sensors, its surroundings,
//! uplink parameters, a fault schedule and scripted operator commands.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusConfig, NodeId};
use crate::filters::FilterSpec;
use crate::nodes::firmware::Behavior;
use crate::nodes::outputs::{Device, MotionCommand};
use crate::nodes::ThermalSpec;
use crate::sensors::{BiasCalibration, SensorKind, WindTable};
use crate::world::{SensorModel, WorldConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted location of the offending field.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Unix seconds at simulation start.
    #[serde(default = "default_epoch")]
    pub epoch_unix: i64,
    #[serde(default)]
    pub bus: BusSection,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub uplink: UplinkConfig,
    #[serde(default)]
    pub calibration: CalibrationSection,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub faults: Vec<FaultEntry>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

fn default_epoch() -> i64 {
    1_600_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusSection {
    pub bitrate: u64,
    pub frame_overhead_bits: u64,
}

impl Default for BusSection {
    fn default() -> Self {
        let c = BusConfig::default();
        BusSection {
            bitrate: c.bitrate,
            frame_overhead_bits: c.frame_overhead_bits,
        }
    }
}

impl From<BusSection> for BusConfig {
    fn from(b: BusSection) -> Self {
        BusConfig {
            bitrate: b.bitrate,
            frame_overhead_bits: b.frame_overhead_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub capacity_ah: f64,
    pub logic_soc: f64,
    pub power_soc: f64,
    /// Output of each of the two panels, watts.
    pub solar_w: f64,
    /// `(from second, watts)` steps overriding `solar_w`.
    pub solar_schedule: Vec<(f64, f64)>,
    /// Draw of each running node on the logic battery.
    pub node_load_w: f64,
    pub hibernate_load_w: f64,
    pub power_load_w: f64,
    /// Extra draw on the power battery while motors run.
    pub motor_load_w: f64,
    pub bridge_resistance_ohm: f64,
    pub step_ms: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            capacity_ah: 54.0,
            logic_soc: 1.0,
            power_soc: 1.0,
            solar_w: 10.0,
            solar_schedule: Vec::new(),
            node_load_w: 0.1,
            hibernate_load_w: 0.005,
            power_load_w: 0.0,
            motor_load_w: 36.0,
            bridge_resistance_ohm: 0.5,
            step_ms: 1000,
        }
    }
}

impl PowerConfig {
    pub fn solar_at(&self, t_s: f64) -> f64 {
        self.solar_schedule
            .iter()
            .rev()
            .find(|(from, _)| *from <= t_s)
            .map_or(self.solar_w, |(_, w)| *w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UplinkConfig {
    pub bandwidth_bytes_s: f64,
    pub latency_ms: u64,
    pub sms_latency_ms: u64,
    /// Partial SMS segments are sent after this much idle time.
    pub sms_flush_ms: u64,
    pub upload_times_s: Vec<f64>,
    pub upload_interval_s: Option<f64>,
    /// Request one more upload when the run ends.
    pub final_upload: bool,
    pub file_request_timeout_s: f64,
    pub staging_capacity: usize,
}

impl Default for UplinkConfig {
    fn default() -> Self {
        UplinkConfig {
            bandwidth_bytes_s: 4000.0,
            latency_ms: 250,
            sms_latency_ms: 5000,
            sms_flush_ms: 1000,
            upload_times_s: Vec::new(),
            upload_interval_s: None,
            final_upload: true,
            file_request_timeout_s: 10.0,
            staging_capacity: 1 << 24,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub magnetometer: Option<BiasCalibration>,
    pub wind: Option<WindTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u8,
    #[serde(default)]
    pub name: String,
    pub behavior: Behavior,
    #[serde(default = "default_version")]
    pub firmware_version: u16,
    #[serde(default = "default_image_size")]
    pub firmware_size: usize,
    pub sd_capacity: Option<usize>,
    #[serde(default)]
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub clock: ClockConfig,
    pub thermal: Option<ThermalSpec>,
    #[serde(default = "default_gps_period")]
    pub gps_period_ms: u64,
    #[serde(default = "default_peltiers")]
    pub peltiers: u8,
}

fn default_version() -> u16 {
    1
}

fn default_image_size() -> usize {
    4096
}

fn default_gps_period() -> u64 {
    1000
}

fn default_peltiers() -> u8 {
    2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    /// Error of the local clock at start, milliseconds.
    pub offset_ms: i64,
    pub drift_ppm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub kind: SensorKind,
    pub period_ms: u64,
    pub model: SensorModel,
    #[serde(default)]
    pub filter: FilterSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    KillNode,
    CorruptUploadByte,
    FailMainModem,
    SdFull,
    BatteryDrain,
    RestoreNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub at_s: f64,
    pub kind: FaultKind,
    pub target: Option<u8>,
    /// Byte offset for corruption, watts for a drain.
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Sent by the uplink node on behalf of the operator.
    #[default]
    Bus,
    Sms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Upload,
    Failover {
        dead: u8,
        camera: u8,
    },
    Reflash {
        target: u8,
        behavior: Behavior,
        version: u16,
        #[serde(default = "default_image_size")]
        size: usize,
        /// Damage the staged copy after its checksum was recorded.
        #[serde(default)]
        corrupt_staged: bool,
    },
    ActivateBackup,
    StopForwarding,
    SensorRequest {
        target: u8,
        sensor: SensorKind,
        #[serde(default)]
        via: Route,
    },
    Drive {
        duration_s: f64,
    },
    Output {
        device: String,
        command: MotionCommand,
    },
    BridgeBatteries {
        target: u8,
    },
    EnablePeriodic {
        #[serde(default)]
        via: Route,
    },
    DisablePeriodic {
        #[serde(default)]
        via: Route,
    },
    ReconnectModem,
    Raw {
        id: u32,
        payload: Vec<u8>,
        #[serde(default)]
        via: Route,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub at_s: f64,
    pub command: Command,
}

impl Scenario {
    /// Parse JSON, reporting the path of the first bad field, then check
    /// cross-references.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let path = if path == "." { "scenario".to_string() } else { path };
            ConfigError::at(path, format!("{inner}"))
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| ConfigError::at(p.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn node(&self, id: u8) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_with(&self, b: Behavior) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.behavior == b)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ConfigError::at("duration_s", "must be a positive number of seconds"));
        }
        BusConfig::from(self.bus)
            .validate()
            .map_err(|e| ConfigError::at("bus.bitrate", e.to_string()))?;
        if self.nodes.is_empty() {
            return Err(ConfigError::at("nodes", "at least one node is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let at = |f: &str| format!("nodes[{i}].{f}");
            if n.id == crate::nodes::BROADCAST {
                return Err(ConfigError::at(at("id"), "255 is the broadcast address"));
            }
            if !seen.insert(n.id) {
                return Err(ConfigError::at(at("id"), format!("duplicate node id {}", n.id)));
            }
            if n.firmware_size > crate::nodes::firmware::FLASH_BYTES {
                return Err(ConfigError::at(at("firmware_size"), "exceeds 8192 bytes of flash"));
            }
            if matches!(n.behavior, Behavior::Logger | Behavior::Uplink) && n.sd_capacity.is_none() {
                return Err(ConfigError::at(
                    at("sd_capacity"),
                    "logger and uplink nodes need an SD card",
                ));
            }
            if !(n.clock.drift_ppm.abs() <= crate::nodes::MAX_DRIFT_PPM) {
                return Err(ConfigError::at(at("clock.drift_ppm"), "must be within ±1000 ppm"));
            }
            if n.gps_period_ms == 0 {
                return Err(ConfigError::at(at("gps_period_ms"), "must be positive"));
            }
            for (j, s) in n.sensors.iter().enumerate() {
                let sat = |f: &str| format!("nodes[{i}].sensors[{j}].{f}");
                if s.period_ms == 0 {
                    return Err(ConfigError::at(sat("period_ms"), "must be positive"));
                }
                if !s.model.supports(s.kind) {
                    return Err(ConfigError::at(
                        sat("model"),
                        format!("cannot produce {:?} readings", s.kind),
                    ));
                }
                if matches!(s.model, SensorModel::Anemometer { .. }) && self.calibration.wind.is_none() {
                    return Err(ConfigError::at(sat("model"), "anemometer needs calibration.wind"));
                }
                let signals = match &s.model {
                    SensorModel::Signal { signal, .. } | SensorModel::Display { signal, .. } => {
                        vec![signal]
                    }
                    SensorModel::Ultrasonic {
                        distance_m,
                        air_temperature,
                    } => vec![distance_m, air_temperature],
                    SensorModel::Anemometer { speed, .. } => vec![speed],
                    _ => vec![],
                };
                for sig in signals {
                    sig.validate().map_err(|m| ConfigError::at(sat("model"), m))?;
                }
                if (s.kind.is_vector() || !matches!(s.kind, SensorKind::Battery | SensorKind::Rainfall))
                    && crate::filters::Filter::from_spec(&s.filter).is_err()
                {
                    return Err(ConfigError::at(sat("filter"), "invalid filter parameters"));
                }
                if matches!(s.kind, SensorKind::Battery | SensorKind::Rainfall) && s.filter != FilterSpec::None {
                    return Err(ConfigError::at(
                        sat("filter"),
                        "count and rail readings are not filtered",
                    ));
                }
            }
            if let Some(t) = &n.thermal {
                if n.behavior != Behavior::Outputs {
                    return Err(ConfigError::at(
                        at("thermal"),
                        "only outputs nodes drive Peltier modules",
                    ));
                }
                let dev: Device = t
                    .device
                    .parse()
                    .map_err(|_| ConfigError::at(at("thermal.device"), format!("unknown device {}", t.device)))?;
                if !matches!(dev, Device::Peltier(k) if k < n.peltiers) {
                    return Err(ConfigError::at(at("thermal.device"), "not a fitted Peltier module"));
                }
                if !(t.band.0 < t.band.1) {
                    return Err(ConfigError::at(at("thermal.band"), "lower bound must be below upper"));
                }
                if t.period_ms == 0 {
                    return Err(ConfigError::at(at("thermal.period_ms"), "must be positive"));
                }
            }
        }
        for b in [Behavior::Uplink, Behavior::SmsModem, Behavior::Gps, Behavior::Outputs] {
            if self.nodes.iter().filter(|n| n.behavior == b).count() > 1 {
                return Err(ConfigError::at("nodes", format!("at most one {b:?} node")));
            }
        }
        let u = &self.uplink;
        if !(u.bandwidth_bytes_s > 0.0) {
            return Err(ConfigError::at("uplink.bandwidth_bytes_s", "must be positive"));
        }
        if let Some(iv) = u.upload_interval_s {
            if !(iv > 0.0) {
                return Err(ConfigError::at("uplink.upload_interval_s", "must be positive"));
            }
        }
        for (i, t) in u.upload_times_s.iter().enumerate() {
            self.check_time(*t, &format!("uplink.upload_times_s[{i}]"))?;
        }
        let p = &self.power;
        if !(p.capacity_ah > 0.0) || p.step_ms == 0 || p.bridge_resistance_ohm < 0.0 {
            return Err(ConfigError::at(
                "power",
                "capacity and step must be positive, resistance non-negative",
            ));
        }
        for (name, soc) in [("power.logic_soc", p.logic_soc), ("power.power_soc", p.power_soc)] {
            if !(0.0..=1.0).contains(&soc) {
                return Err(ConfigError::at(name, "state of charge must lie in [0, 1]"));
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            let at = |x: &str| format!("faults[{i}].{x}");
            self.check_time(f.at_s, &at("at_s"))?;
            let needs_target = !matches!(
                f.kind,
                FaultKind::CorruptUploadByte | FaultKind::BatteryDrain | FaultKind::FailMainModem
            );
            match f.target {
                Some(t) if self.node(t).is_none() => {
                    return Err(ConfigError::at(at("target"), format!("no node {t} in scenario")))
                }
                None if needs_target => return Err(ConfigError::at(at("target"), "this fault needs a target")),
                _ => {}
            }
            if f.kind == FaultKind::SdFull
                && f.target
                    .and_then(|t| self.node(t))
                    .is_some_and(|n| n.sd_capacity.is_none())
            {
                return Err(ConfigError::at(at("target"), "target has no SD card"));
            }
            if f.kind == FaultKind::BatteryDrain && f.parameter.is_none_or(|w| !(w >= 0.0)) {
                return Err(ConfigError::at(
                    at("parameter"),
                    "battery drain needs a non-negative wattage",
                ));
            }
        }
        for (i, s) in self.script.iter().enumerate() {
            let at = |x: &str| format!("script[{i}].{x}");
            self.check_time(s.at_s, &at("at_s"))?;
            let node = |id: u8, field: &str| {
                self.node(id)
                    .map(|_| ())
                    .ok_or_else(|| ConfigError::at(at(field), format!("no node {id} in scenario")))
            };
            match &s.command {
                Command::Failover { dead, camera } => {
                    node(*dead, "command.failover.dead")?;
                    node(*camera, "command.failover.camera")?;
                }
                Command::Reflash { target, size, .. } => {
                    node(*target, "command.reflash.target")?;
                    if *size > u16::MAX as usize {
                        return Err(ConfigError::at(at("command.reflash.size"), "implausibly large image"));
                    }
                }
                Command::SensorRequest { target, .. } => node(*target, "command.sensor_request.target")?,
                Command::BridgeBatteries { target } => node(*target, "command.bridge_batteries.target")?,
                Command::Output { device, .. } => {
                    device
                        .parse::<Device>()
                        .map_err(|e| ConfigError::at(at("command.output.device"), e.to_string()))?;
                }
                Command::Drive { duration_s } if !(*duration_s > 0.0) => {
                    return Err(ConfigError::at(at("command.drive.duration_s"), "must be positive"));
                }
                Command::Raw { id, payload, .. } if (*id > 0x7FF || payload.len() > 8) => {
                    return Err(ConfigError::at(
                        at("command.raw"),
                        "needs an 11-bit id and at most 8 bytes",
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_time(&self, t: f64, path: &str) -> Result<(), ConfigError> {
        if !(t >= 0.0 && t <= self.duration_s) {
            return Err(ConfigError::at(
                path,
                format!("time {t} s lies outside the {} s run", self.duration_s),
            ));
        }
        Ok(())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| NodeId(n.id))
    }
}
