//! Node state machines. Every node runs the same event loop; what it does
//! with delivered frames depends on the behavior selected by its firmware.

pub mod firmware;
pub mod outputs;
pub mod power;
pub mod storage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Frame, NodeId, Ticks};
use crate::filters::{Filter, FilterError, FilterSpec};
use crate::ids::{self, MessageClass};
use crate::sensors::{format_rmc, parse_nmea_rmc, SensorKind, SensorReading, SensorValue};
use crate::transport::{self, decode_large_data, msg_type, CtsToken, Reassembler, TransferKind, TransportMessage};
use crate::world::{SampleCtx, SensorModel, Signal};

use firmware::{Behavior, FirmwareImage, ImageAnnounce, ReflashSession};
use outputs::{thermal_regulate, Device, MotionCommand, OutputBank, OutputError};
use power::PowerState;
use storage::{IngestOutcome, LoggerState, SdCard};

/// Target byte addressing every node.
pub const BROADCAST: u8 = 0xFF;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("node {node:?} has no {kind:?} sensor")]
    UnknownSensor { node: NodeId, kind: SensorKind },
    #[error("{kind:?} sensor cannot use model {model}")]
    ModelMismatch { kind: SensorKind, model: &'static str },
    #[error("{0:?} readings cannot be filtered")]
    Unfilterable(SensorKind),
    #[error("sample period must be positive")]
    ZeroPeriod,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    ReflashLoop,
    Hibernate,
    Dead,
}

/// One sensor on a node together with its smoothing state. Vector sensors
/// carry one filter per axis.
#[derive(Debug, Clone)]
pub struct AttachedSensor {
    pub kind: SensorKind,
    pub period: Ticks,
    pub model: SensorModel,
    spec: FilterSpec,
    filters: Vec<Filter>,
}

impl AttachedSensor {
    pub fn new(kind: SensorKind, period: Ticks, model: SensorModel, spec: FilterSpec) -> Result<Self, NodeError> {
        if period == 0 {
            return Err(NodeError::ZeroPeriod);
        }
        if !model.supports(kind) {
            return Err(NodeError::ModelMismatch {
                kind,
                model: model_name(&model),
            });
        }
        let axes = match kind {
            k if k.is_vector() => 3,
            SensorKind::Rainfall | SensorKind::Battery => {
                if spec != FilterSpec::None {
                    return Err(NodeError::Unfilterable(kind));
                }
                0
            }
            _ => 1,
        };
        let filters = (0..axes).map(|_| Filter::from_spec(&spec)).collect::<Result<_, _>>()?;
        Ok(AttachedSensor {
            kind,
            period,
            model,
            spec,
            filters,
        })
    }

    fn filter(&mut self, v: SensorValue) -> SensorValue {
        match v {
            SensorValue::Scalar(x) => SensorValue::Scalar(self.filters[0].update(x)),
            SensorValue::Vector(a) => {
                let mut out = [0.0; 3];
                for (i, (f, x)) in self.filters.iter_mut().zip(a).enumerate() {
                    out[i] = f.update(x);
                }
                SensorValue::Vector(out)
            }
            other => other,
        }
    }

    fn reset(&mut self) {
        for f in &mut self.filters {
            *f = Filter::from_spec(&self.spec).expect("spec validated at attach");
        }
    }
}

fn model_name(m: &SensorModel) -> &'static str {
    match m {
        SensorModel::Signal { .. } => "signal",
        SensorModel::Display { .. } => "display",
        SensorModel::Ultrasonic { .. } => "ultrasonic",
        SensorModel::Anemometer { .. } => "anemometer",
        SensorModel::Rain { .. } => "rain",
        SensorModel::Accelerometer { .. } => "accelerometer",
        SensorModel::Magnetometer { .. } => "magnetometer",
        SensorModel::Gyro { .. } => "gyro",
        SensorModel::ArmPotentiometer { .. } => "arm_potentiometer",
        SensorModel::BatteryMonitor => "battery_monitor",
    }
}

/// Local real-time clock: a free-running oscillator plus whatever offset the
/// last GPS broadcast implied.
/// Largest crystal error a scenario may configure.
pub const MAX_DRIFT_PPM: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeClock {
    /// Unix microseconds the clock showed at simulation start.
    pub start_unix_us: i64,
    pub drift_ppm: f64,
    correction_us: i64,
}

impl NodeClock {
    pub fn new(start_unix_us: i64, drift_ppm: f64) -> Self {
        NodeClock {
            start_unix_us,
            drift_ppm,
            correction_us: 0,
        }
    }

    fn free_running(&self, now: Ticks) -> i64 {
        self.start_unix_us + now as i64 + (now as f64 * self.drift_ppm / 1e6).round() as i64
    }

    pub fn unix_us(&self, now: Ticks) -> u64 {
        (self.free_running(now) + self.correction_us).max(0) as u64
    }

    pub fn sync(&mut self, gps_unix_us: i64, now: Ticks) {
        self.correction_us = gps_unix_us - self.free_running(now);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSpec {
    pub device: String,
    pub band: (f64, f64),
    pub temperature: Signal,
    pub period_ms: u64,
}

/// Side effects a node reports to the simulation besides bus frames.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEffect {
    /// A complete log file reassembled by the uplink node.
    FileReceived {
        from: NodeId,
        name: String,
        bytes: Vec<u8>,
    },
    /// A clear-to-send seen by the uplink node during a reflash it drives.
    Cts(CtsToken),
    /// A node broadcast its firmware after a reflash finalize.
    Status(NodeStatus),
    /// Frame to push out over the SMS link.
    SmsOutbound(Frame),
    Actuator(MotionCommand),
    Drive {
        left: MotionCommand,
        right: MotionCommand,
    },
    BridgeBatteries,
    SdFull {
        node: NodeId,
    },
    Transport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStatus {
    pub node: NodeId,
    pub behavior: Behavior,
    pub version: u16,
    pub accepted: bool,
}

impl NodeStatus {
    fn to_message(self) -> TransportMessage {
        let v = self.version.to_le_bytes();
        TransportMessage::new(
            TransferKind::Broadcast,
            msg_type::NODE_STATUS,
            vec![self.behavior.code(), v[0], v[1], self.accepted as u8],
            self.node,
        )
    }

    pub fn from_message(m: &TransportMessage) -> Option<Self> {
        let p = &m.payload;
        if m.msg_type != msg_type::NODE_STATUS || p.len() != 4 {
            return None;
        }
        Some(NodeStatus {
            node: m.origin,
            behavior: Behavior::from_code(p[0]).ok()?,
            version: u16::from_le_bytes([p[1], p[2]]),
            accepted: p[3] != 0,
        })
    }
}

#[derive(Debug, Default)]
pub struct Output {
    pub frames: Vec<Frame>,
    pub effects: Vec<NodeEffect>,
}

impl Output {
    fn frame(&mut self, f: Frame) {
        self.frames.push(f);
    }
}

pub fn command_frame(id: u32, payload: &[u8], source: NodeId) -> Frame {
    Frame::new(ids::std_id(id), payload, source).expect("command payload fits a frame")
}

/// Log file as carried over the bus: `[name_len:1][name][bytes]`.
pub fn file_message(name: &str, bytes: &[u8], origin: NodeId) -> TransportMessage {
    let mut p = Vec::with_capacity(1 + name.len() + bytes.len());
    p.push(name.len() as u8);
    p.extend_from_slice(name.as_bytes());
    p.extend_from_slice(bytes);
    TransportMessage::new(TransferKind::LargeTransfer, msg_type::FILE, p, origin)
}

fn split_file_message(p: &[u8]) -> Option<(String, Vec<u8>)> {
    let n = *p.first()? as usize;
    let name = std::str::from_utf8(p.get(1..1 + n)?).ok()?.to_string();
    Some((name, p[1 + n..].to_vec()))
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    firmware: FirmwareImage,
    mode: Mode,
    periodic: bool,
    sensors: Vec<AttachedSensor>,
    sd: Option<SdCard>,
    logger: Option<LoggerState>,
    outputs: OutputBank,
    thermal: Option<ThermalSpec>,
    thermal_log: Vec<(Ticks, MotionCommand)>,
    reflash: Option<ReflashSession>,
    reassembler: Reassembler,
    clock: NodeClock,
    forwarding: bool,
}

impl Node {
    pub fn new(id: NodeId, name: impl Into<String>, firmware: FirmwareImage, sd_capacity: Option<usize>) -> Self {
        let mut n = Node {
            id,
            name: name.into(),
            firmware,
            mode: Mode::Normal,
            periodic: true,
            sensors: Vec::new(),
            sd: sd_capacity.map(SdCard::new),
            logger: None,
            outputs: OutputBank::default(),
            thermal: None,
            thermal_log: Vec::new(),
            reflash: None,
            reassembler: Reassembler::new(transport::DEFAULT_SESSION_TIMEOUT),
            clock: NodeClock::default(),
            forwarding: false,
        };
        n.start_behavior();
        n
    }

    fn start_behavior(&mut self) {
        self.logger = match (self.firmware.behavior, &self.sd) {
            (Behavior::Logger, Some(sd)) => Some(LoggerState::new(sd)),
            _ => None,
        };
        if self.firmware.behavior == Behavior::Outputs && self.outputs.devices().next().is_none() {
            self.outputs = OutputBank::standard(2);
        }
        self.forwarding = false;
        self.reassembler.reset();
    }

    pub fn behavior(&self) -> Behavior {
        self.firmware.behavior
    }

    pub fn firmware(&self) -> &FirmwareImage {
        &self.firmware
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn periodic_enabled(&self) -> bool {
        self.periodic
    }

    pub fn is_forwarding(&self) -> bool {
        self.forwarding
    }

    pub fn sd(&self) -> Option<&SdCard> {
        self.sd.as_ref()
    }

    pub fn sd_mut(&mut self) -> Option<&mut SdCard> {
        self.sd.as_mut()
    }

    pub fn logger(&self) -> Option<&LoggerState> {
        self.logger.as_ref()
    }

    pub fn outputs(&self) -> &OutputBank {
        &self.outputs
    }

    pub fn set_outputs(&mut self, bank: OutputBank) {
        self.outputs = bank;
    }

    pub fn clock(&self) -> &NodeClock {
        &self.clock
    }

    pub fn set_clock(&mut self, clock: NodeClock) {
        self.clock = clock;
    }

    pub fn sensors(&self) -> &[AttachedSensor] {
        &self.sensors
    }

    pub fn attach(&mut self, sensor: AttachedSensor) -> usize {
        self.sensors.push(sensor);
        self.sensors.len() - 1
    }

    pub fn sensor_index(&self, kind: SensorKind) -> Result<usize, NodeError> {
        self.sensors
            .iter()
            .position(|s| s.kind == kind)
            .ok_or(NodeError::UnknownSensor { node: self.id, kind })
    }

    pub fn set_thermal(&mut self, spec: ThermalSpec) -> Result<(), NodeError> {
        let device: Device = spec.device.parse()?;
        if self.outputs.state(&device).is_none() {
            return Err(OutputError::UnknownDevice(spec.device.clone()).into());
        }
        thermal_regulate(spec.band.0, spec.band)?;
        self.thermal = Some(spec);
        Ok(())
    }

    pub fn thermal(&self) -> Option<&ThermalSpec> {
        self.thermal.as_ref()
    }

    pub fn thermal_log(&self) -> &[(Ticks, MotionCommand)] {
        &self.thermal_log
    }

    pub fn is_live(&self) -> bool {
        matches!(self.mode, Mode::Normal | Mode::ReflashLoop)
    }

    /// Power loss or physical failure; volatile state is gone.
    pub fn kill(&mut self) {
        self.mode = Mode::Dead;
        self.reflash = None;
        self.forwarding = false;
        self.reassembler.reset();
    }

    /// Bring a dead node back as after a cold start.
    pub fn restore(&mut self) {
        if self.mode != Mode::Dead {
            return;
        }
        self.mode = Mode::Normal;
        self.periodic = true;
        for s in &mut self.sensors {
            s.reset();
        }
        self.start_behavior();
    }

    /// Brown-out: drop any reflash, send the final alarm, then sleep. RAM
    /// (filter state included) is retained.
    pub fn brown_out(&mut self, power: &PowerState) -> Option<Frame> {
        if !self.is_live() {
            return None;
        }
        self.reflash = None;
        self.mode = Mode::Hibernate;
        let mv = |v: f64| ((v * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16).to_le_bytes();
        let (l, p) = (mv(power.battery_logic()), mv(power.battery_power()));
        Some(command_frame(ids::POWER_ALARM, &[l[0], l[1], p[0], p[1]], self.id))
    }

    pub fn wake(&mut self) {
        if self.mode == Mode::Hibernate {
            self.mode = Mode::Normal;
            if let (Some(l), Some(sd)) = (self.logger.as_mut(), self.sd.as_ref()) {
                l.close_current(sd);
            }
        }
    }

    fn read<R: rand::Rng>(&mut self, idx: usize, ctx: &mut SampleCtx<'_, R>) -> Frame {
        let raw = ctx.env.sample(&self.sensors[idx].model, ctx);
        let s = &mut self.sensors[idx];
        let value = s.filter(raw);
        let kind = s.kind;
        let value = match (kind.range(), value) {
            (Some((lo, hi)), SensorValue::Scalar(v)) => SensorValue::Scalar(v.clamp(lo, hi)),
            (_, v) => v,
        };
        SensorReading::new(self.clock.unix_us(ctx.now), self.id, kind, value)
            .expect("model shape matches kind")
            .to_frame()
    }

    /// Periodic sample tick. Nothing is sent while broadcasts are disabled
    /// or the node is not running normally.
    pub fn periodic_sample<R: rand::Rng>(&mut self, idx: usize, ctx: &mut SampleCtx<'_, R>) -> Option<Frame> {
        if self.mode != Mode::Normal || !self.periodic {
            return None;
        }
        Some(self.read(idx, ctx))
    }

    /// GPS receiver tick: one RMC sentence becomes a clock and a position
    /// broadcast.
    pub fn gps_tick<R: rand::Rng>(&mut self, ctx: &mut SampleCtx<'_, R>) -> Vec<Frame> {
        if self.mode != Mode::Normal || !self.periodic || self.firmware.behavior != Behavior::Gps {
            return Vec::new();
        }
        let env = ctx.env;
        let sigma = env.config.gps_noise_deg;
        let jitter = |rng: &mut R| {
            if sigma > 0.0 {
                rng.gen_range(-sigma..=sigma)
            } else {
                0.0
            }
        };
        let lat = env.latitude + jitter(ctx.rng);
        let lon = env.longitude + jitter(ctx.rng);
        let sentence = format_rmc(env.unix_us(ctx.now), lat, lon, true);
        let Ok(fix) = parse_nmea_rmc(&sentence) else {
            return Vec::new();
        };
        let mut frames = vec![command_frame(
            ids::GPS_CLOCK,
            &(fix.unix_us as u64).to_le_bytes(),
            self.id,
        )];
        if let (true, Some(la), Some(lo)) = (fix.valid, fix.latitude, fix.longitude) {
            let mut p = [0u8; 8];
            p[..4].copy_from_slice(&((la * 1e7).round() as i32).to_le_bytes());
            p[4..].copy_from_slice(&((lo * 1e7).round() as i32).to_le_bytes());
            frames.push(command_frame(ids::GPS_POSITION, &p, self.id));
        }
        frames
    }

    /// Peltier regulation tick for an outputs node.
    pub fn thermal_tick(&mut self, now: Ticks) -> Option<MotionCommand> {
        if self.mode != Mode::Normal {
            return None;
        }
        let spec = self.thermal.as_ref()?;
        let device: Device = spec.device.parse().ok()?;
        let cmd = thermal_regulate(spec.temperature.at(now), spec.band).ok()?;
        self.outputs.hbridge_set(&device, cmd).ok()?;
        self.thermal_log.push((now, cmd));
        Some(cmd)
    }

    fn addressed(&self, p: &[u8]) -> bool {
        p.first().is_some_and(|t| *t == self.id.0 || *t == BROADCAST)
    }

    /// One delivered frame. `own` marks the node's loopback of its own
    /// transmission.
    pub fn handle<R: rand::Rng>(&mut self, frame: &Frame, own: bool, ctx: &mut SampleCtx<'_, R>) -> Output {
        let mut out = Output::default();
        match self.mode {
            Mode::Dead | Mode::Hibernate => {}
            Mode::ReflashLoop => {
                if !own {
                    self.handle_reflash(frame, &mut out);
                }
            }
            Mode::Normal => self.handle_normal(frame, own, ctx, &mut out),
        }
        out
    }

    fn handle_reflash(&mut self, frame: &Frame, out: &mut Output) {
        let p = frame.payload();
        match ids::classify(frame.id()) {
            MessageClass::LargeData(t) if t == msg_type::FIRMWARE => {
                let Some(session) = self.reflash.as_mut() else {
                    return;
                };
                let Ok((index, data)) = decode_large_data(frame) else {
                    return;
                };
                match session.apply_frame(index, data) {
                    Ok(Some(token)) => out.frame(token.to_frame()),
                    Ok(None) => {}
                    Err(e) => {
                        out.effects
                            .push(NodeEffect::Transport(format!("node {}: {e}", self.id.0)));
                        self.abort_reflash();
                    }
                }
            }
            MessageClass::Command if self.addressed(p) => match frame.id().value() {
                ids::CMD_REFLASH_ABORT => self.abort_reflash(),
                ids::CMD_REFLASH_FINALIZE => {
                    let session = self.reflash.take().expect("reflash loop has a session");
                    let accepted = match session.finalize() {
                        Ok(image) => {
                            self.firmware = image;
                            true
                        }
                        Err(_) => false,
                    };
                    self.mode = Mode::Normal;
                    if accepted {
                        self.start_behavior();
                    }
                    let status = NodeStatus {
                        node: self.id,
                        behavior: self.firmware.behavior,
                        version: self.firmware.version,
                        accepted,
                    };
                    out.frames
                        .extend(transport::fragment(&status.to_message()).expect("status fits"));
                }
                _ => {}
            },
            _ => {}
        }
    }

    fn abort_reflash(&mut self) {
        self.reflash = None;
        self.mode = Mode::Normal;
    }

    fn handle_normal<R: rand::Rng>(&mut self, frame: &Frame, own: bool, ctx: &mut SampleCtx<'_, R>, out: &mut Output) {
        let behavior = self.firmware.behavior;
        if let Some(logger) = self.logger.as_mut() {
            let sd = self.sd.as_mut().expect("logger implies card");
            if let IngestOutcome::Dropped { raise_alarm: true } = logger.ingest(sd, frame, self.clock.unix_us(ctx.now))
            {
                let free = (sd.free() as u32).to_le_bytes();
                out.frame(command_frame(ids::SD_FULL_ALARM, &free, self.id));
                out.effects.push(NodeEffect::SdFull { node: self.id });
            }
        }
        if behavior == Behavior::SmsModem {
            // Operator commands reach the bus through this node, so they
            // arrive as its own frames.
            if frame.id().value() == ids::CMD_START_FORWARDING && self.addressed(frame.payload()) {
                self.forwarding = true;
            } else if self.forwarding && !own {
                out.effects.push(NodeEffect::SmsOutbound(frame.clone()));
            }
            if frame.id().value() == ids::CMD_STOP_FORWARDING && self.addressed(frame.payload()) {
                self.forwarding = false;
            }
        }
        if own {
            return;
        }
        let p = frame.payload();
        let id = frame.id().value();
        match id {
            ids::GPS_CLOCK if p.len() == 8 => {
                self.clock
                    .sync(u64::from_le_bytes(p.try_into().unwrap()) as i64, ctx.now);
            }
            ids::CMD_DISABLE_PERIODIC if self.addressed(p) => self.periodic = false,
            ids::CMD_ENABLE_PERIODIC if self.addressed(p) => self.periodic = true,
            ids::CMD_REFLASH_ENTER => {
                if let Ok(a) = ImageAnnounce::from_payload(p) {
                    if a.target == self.id {
                        self.reflash = Some(ReflashSession::new(a));
                        self.mode = Mode::ReflashLoop;
                    }
                }
            }
            ids::CMD_SENSOR_REQUEST if self.addressed(p) && p.len() == 2 => {
                if let Some(idx) = SensorKind::from_code(p[1]).and_then(|k| self.sensor_index(k).ok()) {
                    out.frame(self.read(idx, ctx));
                }
            }
            ids::CMD_OUTPUT if behavior == Behavior::Outputs && self.addressed(p) && p.len() == 3 => {
                if let (Ok(dev), Ok(cmd)) = (Device::from_code(p[1]), MotionCommand::from_code(p[2])) {
                    if self.outputs.hbridge_set(&dev, cmd).is_ok() && dev == Device::LinearActuator {
                        out.effects.push(NodeEffect::Actuator(cmd));
                    }
                }
            }
            ids::CMD_DRIVE if behavior == Behavior::Outputs && self.addressed(p) && p.len() == 3 => {
                if let (Ok(left), Ok(right)) = (MotionCommand::from_code(p[1]), MotionCommand::from_code(p[2])) {
                    let l = self.outputs.hbridge_set(&Device::DriveLeft, left);
                    let r = self.outputs.hbridge_set(&Device::DriveRight, right);
                    if l.is_ok() && r.is_ok() {
                        out.effects.push(NodeEffect::Drive { left, right });
                    }
                }
            }
            ids::CMD_BRIDGE_BATTERIES if self.addressed(p) => out.effects.push(NodeEffect::BridgeBatteries),
            ids::FILE_REQUEST if behavior == Behavior::Logger && self.addressed(p) => self.send_log(out),
            ids::FILE_DELETE if behavior == Behavior::Logger && self.addressed(p) && p.len() == 5 => {
                let seq = u32::from_le_bytes(p[1..5].try_into().unwrap());
                if let Some(sd) = self.sd.as_mut() {
                    let _ = sd.delete(&storage::log_file_name(seq));
                }
            }
            ids::CTS if behavior == Behavior::Uplink => {
                if let Ok(token) = CtsToken::from_frame(frame) {
                    out.effects.push(NodeEffect::Cts(token));
                }
            }
            _ if behavior == Behavior::Uplink => self.uplink_reassemble(frame, ctx.now, out),
            _ => {}
        }
    }

    fn send_log(&mut self, out: &mut Output) {
        let (Some(logger), Some(sd)) = (self.logger.as_mut(), self.sd.as_ref()) else {
            return;
        };
        let Some(name) = logger.take_for_upload(sd) else {
            return;
        };
        let bytes = sd.read(&name).expect("listed file exists");
        let msg = file_message(&name, bytes, self.id);
        match transport::fragment(&msg) {
            Ok(frames) => out.frames.extend(frames),
            Err(e) => out.effects.push(NodeEffect::Transport(e.to_string())),
        }
    }

    fn uplink_reassemble(&mut self, frame: &Frame, now: Ticks, out: &mut Output) {
        let wanted = match ids::classify(frame.id()) {
            MessageClass::LargeAnnounce(t) | MessageClass::LargeData(t) => t == msg_type::FILE,
            MessageClass::BroadcastAnnounce(t) | MessageClass::BroadcastData(t) => t == msg_type::NODE_STATUS,
            _ => false,
        };
        if !wanted {
            return;
        }
        match self.reassembler.handle(frame, now) {
            Ok(Some(msg)) if msg.msg_type == msg_type::FILE => {
                if let Some((name, bytes)) = split_file_message(&msg.payload) {
                    out.effects.push(NodeEffect::FileReceived {
                        from: msg.origin,
                        name,
                        bytes,
                    });
                }
            }
            Ok(Some(msg)) => {
                if let Some(s) = NodeStatus::from_message(&msg) {
                    out.effects.push(NodeEffect::Status(s));
                }
            }
            Ok(None) => {}
            Err(e) => out.effects.push(NodeEffect::Transport(e.to_string())),
        }
    }
}
