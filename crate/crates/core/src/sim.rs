//! Discrete-event run of a scenario.
//!
//! One action queue ordered by `(time, insertion)` drives sampling, power,
//! faults and operator commands; bus deliveries due at the same instant are
//! handled before queued actions. After the scenario's duration, periodic
//! work stops and outstanding protocol steps (uploads, reflash, SMS) are
//! allowed to finish.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bus::{frame_time, Bus, BusConfig, BusError, BusEvent, Frame, NodeId, Ticks};
use crate::gateway::{Archive, Gateway, GatewayStats, Site, SiteLog, TcpSink};
use crate::ids;
use crate::nodes::firmware::{verify_image, Behavior, FirmwareError, FirmwareImage};
use crate::nodes::outputs::{Device, MotionCommand, OutputBank};
use crate::nodes::power::{power_step, PowerEvent, PowerState, Rails};
use crate::nodes::storage::log_file_seq;
use crate::nodes::{
    command_frame, AttachedSensor, Mode, Node, NodeClock, NodeEffect, NodeError, NodeStatus, BROADCAST,
};
use crate::replay::{replay_verify, ReplayReport};
use crate::scenario::{Command, ConfigError, FaultKind, Route, Scenario};
use crate::transport::{
    msg_type, paced_chunk_frames, transcript_is_strict, CtsToken, TranscriptEntry, DEFAULT_CTS_TIMEOUT,
};
use crate::uplink::{
    serialize_frame_for_sms, upload_log, LinkFault, MainModem, ModemState, SmsBridge, SmsDeserializer, UplinkError,
    UploadResult, UploadSession, UploadSink,
};
use crate::world::{Environment, SampleCtx};

/// How long after the nominal end outstanding protocol steps may run.
pub const WIND_DOWN: Ticks = 600_000_000;
const STAGED_IMAGE_SIZE: usize = 4096;

fn secs(t: Ticks) -> f64 {
    t as f64 / 1e6
}

fn ticks(s: f64) -> Ticks {
    (s * 1e6).round() as Ticks
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Firmware(#[from] FirmwareError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Uplink(#[from] UplinkError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum GatewayTarget {
    /// In-process gateway with simulated receive times.
    #[default]
    Embedded,
    /// `tcp://host:port` of a running gateway service.
    Tcp(String),
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub seed: Option<u64>,
    /// Cut the run short, seconds.
    pub until_s: Option<f64>,
    pub gateway: GatewayTarget,
}

enum Sink {
    Embedded(Gateway),
    Tcp(TcpSink),
}

impl Sink {
    fn as_dyn(&mut self) -> &mut dyn UploadSink {
        match self {
            Sink::Embedded(g) => g,
            Sink::Tcp(t) => t,
        }
    }
}

#[derive(Debug, Clone)]
enum Action {
    Sample { node: usize, sensor: usize },
    Gps { node: usize },
    Thermal { node: usize },
    PowerTick,
    Fault(usize),
    Script(usize),
    Upload,
    RequestTimeout { attempt: u64 },
    ModemDone { attempt: u64 },
    ReflashCheck { step: u64 },
    SmsInbound,
    SmsOutbound,
    SmsFlush,
    DriveStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DownReason {
    Dead,
    Hibernate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DownInterval {
    pub from: Ticks,
    /// `None` while still down.
    pub to: Option<Ticks>,
    pub reason: DownReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum UploadOutcome {
    Acked {
        crc: u16,
    },
    ChecksumMismatch {
        local: u16,
        remote: u16,
    },
    ModemFailed {
        bytes_sent: usize,
    },
    NotConnected,
    /// The logger sent nothing before the request timed out.
    NoFile,
    Busy,
    UplinkDown,
    NoLogger,
    Failed {
        reason: String,
    },
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UploadRecord {
    pub requested_at_s: f64,
    pub logger: Option<NodeId>,
    pub file: Option<String>,
    pub bytes: usize,
    pub finished_at_s: Option<f64>,
    pub outcome: Option<UploadOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflashOutcome {
    Completed,
    /// Staged image failed its checksum; the target was never touched.
    CrcRejected,
    CtsTimeout,
    /// No status broadcast after finalize.
    StatusTimeout,
    /// The target reported it did not accept the image.
    TargetRejected,
    Busy,
    UplinkDown,
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflashRecord {
    pub target: NodeId,
    pub behavior: Behavior,
    pub version: u16,
    pub size: usize,
    pub chunks: u32,
    pub started_at_s: f64,
    pub finished_at_s: Option<f64>,
    pub outcome: Option<ReflashOutcome>,
    #[serde(skip)]
    pub transcript: Vec<TranscriptEntry>,
    pub transcript_strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailoverRecord {
    pub dead: NodeId,
    pub camera: NodeId,
    pub killed_at_s: Option<f64>,
    /// Request time of the dead logger's last acknowledged upload; traffic
    /// after it existed only on the failed card.
    pub secured_until_s: f64,
    pub requested_at_s: f64,
    pub completed_at_s: Option<f64>,
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultRecord {
    pub at_s: f64,
    pub kind: FaultKind,
    pub target: Option<u8>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptRecord {
    pub at_s: f64,
    pub command: Command,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRecord {
    pub at_s: f64,
    pub event: String,
    pub logic_v: f64,
    pub power_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub id: NodeId,
    pub name: String,
    pub behavior: Behavior,
    pub version: u16,
    pub mode: Mode,
    pub frames_sent: usize,
    pub records_logged: u64,
    pub records_dropped: u64,
    pub down: Vec<DownInterval>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SmsReport {
    pub activated_at_s: Option<f64>,
    pub segments_in: u64,
    pub segments_out: u64,
    pub frames_injected: usize,
    pub frames_received: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub ended_at_s: f64,
    pub frames: usize,
    pub nodes: Vec<NodeReport>,
    pub records_logged: u64,
    pub records_dropped: u64,
    pub uploads_acked: usize,
    pub uploads: Vec<UploadRecord>,
    pub faults: Vec<FaultRecord>,
    pub script: Vec<ScriptRecord>,
    pub failovers: Vec<FailoverRecord>,
    pub reflashes: Vec<ReflashRecord>,
    pub sms: SmsReport,
    pub power: Vec<PowerRecord>,
    pub sites: Vec<Site>,
    pub gateway: Option<GatewayStats>,
    pub decoded_records: Option<usize>,
    pub sd_full_alarms: usize,
    pub transport_errors: Vec<String>,
    pub replay: Option<ReplayReport>,
    pub violations: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
enum UploadState {
    Idle,
    Requested {
        attempt: u64,
        record: usize,
    },
    Transferring {
        attempt: u64,
        record: usize,
        name: String,
        started: Ticks,
        wire_len: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Streaming,
    Finalizing,
}

#[derive(Debug, Clone)]
struct ReflashJob {
    record: usize,
    target: NodeId,
    image: FirmwareImage,
    chunks: u32,
    next: u32,
    phase: Phase,
    step: u64,
    failover: Option<usize>,
}

pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    end: Ticks,
    bus: Bus,
    nodes: Vec<Node>,
    env: Environment,
    power: PowerState,
    rng: ChaCha8Rng,
    queue: BTreeMap<(Ticks, u64), Action>,
    seq: u64,
    now: Ticks,
    trace: Vec<BusEvent>,
    sink: Sink,
    modem: MainModem,
    upload: UploadState,
    attempt: u64,
    pending_corruption: Option<usize>,
    uploads: Vec<UploadRecord>,
    secured_until: BTreeMap<NodeId, Ticks>,
    active_logger: Option<NodeId>,
    uplink: Option<NodeId>,
    sms_node: Option<NodeId>,
    outputs_node: Option<NodeId>,
    job: Option<ReflashJob>,
    job_step: u64,
    reflashes: Vec<ReflashRecord>,
    failovers: Vec<FailoverRecord>,
    sms_in: SmsBridge,
    sms_out: SmsBridge,
    sms_node_rx: SmsDeserializer,
    operator_rx: SmsDeserializer,
    sms_flush_pending: bool,
    sms_received: Vec<(Ticks, Frame)>,
    sms_injected: usize,
    backup_at: Option<Ticks>,
    drive_since: Option<Ticks>,
    extra_logic_w: f64,
    sites: SiteLog,
    down: BTreeMap<NodeId, Vec<DownInterval>>,
    power_log: Vec<PowerRecord>,
    voltage: Vec<(Ticks, f64, f64)>,
    fault_log: Vec<FaultRecord>,
    script_log: Vec<ScriptRecord>,
    sd_full_alarms: usize,
    transport_errors: Vec<String>,
    finished: bool,
}

impl Simulation {
    pub fn new(scenario: Scenario, options: SimOptions) -> Result<Self, SimError> {
        let mut scenario = scenario;
        if let Some(until) = options.until_s {
            if !(until > 0.0) {
                return Err(ConfigError {
                    path: "--until".into(),
                    message: "must be a positive number of seconds".into(),
                }
                .into());
            }
            if until < scenario.duration_s {
                scenario.duration_s = until;
                scenario.faults.retain(|f| f.at_s <= until);
                scenario.script.retain(|s| s.at_s <= until);
                scenario.uplink.upload_times_s.retain(|t| *t <= until);
            }
        }
        scenario.validate()?;
        let seed = options.seed.unwrap_or(scenario.seed);
        let epoch_us = scenario.epoch_unix * 1_000_000;

        let mut bus = Bus::new(BusConfig::from(scenario.bus))?;
        let mut configs = scenario.nodes.clone();
        configs.sort_by_key(|n| n.id);
        let mut nodes = Vec::with_capacity(configs.len());
        for c in &configs {
            let fw = FirmwareImage::synthetic(c.behavior, c.firmware_version, c.firmware_size)?;
            let name = if c.name.is_empty() {
                format!("node{}", c.id)
            } else {
                c.name.clone()
            };
            let mut n = Node::new(NodeId(c.id), name, fw, c.sd_capacity);
            n.set_clock(NodeClock::new(epoch_us + c.clock.offset_ms * 1000, c.clock.drift_ppm));
            for s in &c.sensors {
                n.attach(AttachedSensor::new(
                    s.kind,
                    s.period_ms * 1000,
                    s.model.clone(),
                    s.filter,
                )?);
            }
            if c.behavior == Behavior::Outputs {
                n.set_outputs(OutputBank::standard(c.peltiers));
            }
            if let Some(t) = &c.thermal {
                n.set_thermal(t.clone())?;
            }
            bus.register(n.id);
            nodes.push(n);
        }
        let find = |b: Behavior| configs.iter().find(|n| n.behavior == b).map(|n| NodeId(n.id));

        let mut env = Environment::new(scenario.world.clone(), scenario.calibration.wind.clone());
        env.epoch_unix_us = epoch_us;
        let p = &scenario.power;
        let power = PowerState::new(p.capacity_ah, p.logic_soc, p.power_soc, p.bridge_resistance_ohm);
        let u = &scenario.uplink;
        let modem = MainModem::new(u.bandwidth_bytes_s, u.latency_ms * 1000);
        let sink = match &options.gateway {
            GatewayTarget::Embedded => {
                let mut g = Gateway::new(Archive::in_memory());
                if let Some(cal) = scenario.calibration.magnetometer {
                    g = g.with_calibration(cal);
                }
                Sink::Embedded(g)
            }
            GatewayTarget::Tcp(url) => Sink::Tcp(TcpSink::from_url(url).map_err(|e| ConfigError {
                path: "--gateway".into(),
                message: e.to_string(),
            })?),
        };
        let sms_node = find(Behavior::SmsModem);
        let sms_latency = u.sms_latency_ms * 1000;
        let mut sim = Simulation {
            end: ticks(scenario.duration_s),
            seed,
            bus,
            env,
            power,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            trace: Vec::new(),
            sink,
            modem,
            upload: UploadState::Idle,
            attempt: 0,
            pending_corruption: None,
            uploads: Vec::new(),
            secured_until: BTreeMap::new(),
            active_logger: find(Behavior::Logger),
            uplink: find(Behavior::Uplink),
            sms_node,
            outputs_node: find(Behavior::Outputs),
            job: None,
            job_step: 0,
            reflashes: Vec::new(),
            failovers: Vec::new(),
            sms_in: SmsBridge::new(sms_latency),
            sms_out: SmsBridge::new(sms_latency),
            sms_node_rx: SmsDeserializer::new(sms_node.unwrap_or(NodeId(0))),
            operator_rx: SmsDeserializer::new(sms_node.unwrap_or(NodeId(0))),
            sms_flush_pending: false,
            sms_received: Vec::new(),
            sms_injected: 0,
            backup_at: None,
            drive_since: None,
            extra_logic_w: 0.0,
            sites: SiteLog::new(scenario.epoch_unix as f64),
            down: BTreeMap::new(),
            power_log: Vec::new(),
            voltage: Vec::new(),
            fault_log: Vec::new(),
            script_log: Vec::new(),
            sd_full_alarms: 0,
            transport_errors: Vec::new(),
            finished: false,
            nodes,
            scenario,
        };
        sim.schedule_initial();
        Ok(sim)
    }

    fn schedule(&mut self, at: Ticks, action: Action) {
        self.seq += 1;
        self.queue.insert((at, self.seq), action);
    }

    fn schedule_initial(&mut self) {
        let step = self.scenario.power.step_ms * 1000;
        if step <= self.end {
            self.schedule(step, Action::PowerTick);
        }
        for c in self.scenario.nodes.clone() {
            let i = self.index(NodeId(c.id));
            if c.behavior == Behavior::Gps {
                self.schedule(0, Action::Gps { node: i });
            }
            for j in 0..c.sensors.len() {
                self.schedule(0, Action::Sample { node: i, sensor: j });
            }
            if c.thermal.is_some() {
                self.schedule(0, Action::Thermal { node: i });
            }
        }
        for i in 0..self.scenario.faults.len() {
            let t = ticks(self.scenario.faults[i].at_s);
            self.schedule(t, Action::Fault(i));
        }
        for i in 0..self.scenario.script.len() {
            let t = ticks(self.scenario.script[i].at_s);
            self.schedule(t, Action::Script(i));
        }
        let u = self.scenario.uplink.clone();
        for t in &u.upload_times_s {
            self.schedule(ticks(*t), Action::Upload);
        }
        if let Some(iv) = u.upload_interval_s {
            let mut k = 1u64;
            while ticks(iv * k as f64) < self.end {
                self.schedule(ticks(iv * k as f64), Action::Upload);
                k += 1;
            }
        }
        if u.final_upload {
            self.schedule(self.end, Action::Upload);
        }
    }

    fn index(&self, id: NodeId) -> usize {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .expect("node ids validated")
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> Ticks {
        self.now
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn trace(&self) -> &[BusEvent] {
        &self.trace
    }

    pub fn power(&self) -> &PowerState {
        &self.power
    }

    /// `(time, logic volts, power volts)` after every power step.
    pub fn voltage_history(&self) -> &[(Ticks, f64, f64)] {
        &self.voltage
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    /// Frames that reached the operator over SMS, with arrival times.
    pub fn sms_received(&self) -> &[(Ticks, Frame)] {
        &self.sms_received
    }

    pub fn backup_activated_at(&self) -> Option<Ticks> {
        self.backup_at
    }

    pub fn reflashes(&self) -> &[ReflashRecord] {
        &self.reflashes
    }

    pub fn uploads(&self) -> &[UploadRecord] {
        &self.uploads
    }

    pub fn down_intervals(&self, id: NodeId) -> &[DownInterval] {
        self.down.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn active_logger(&self) -> Option<NodeId> {
        self.active_logger
    }

    pub fn sites(&self) -> &SiteLog {
        &self.sites
    }

    /// The embedded gateway, when the run uses one.
    pub fn gateway(&self) -> Option<&Gateway> {
        match &self.sink {
            Sink::Embedded(g) => Some(g),
            Sink::Tcp(_) => None,
        }
    }

    pub fn archive(&self) -> Option<&Archive> {
        self.gateway().map(Gateway::archive)
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Process events up to and including `until`.
    pub fn run_until(&mut self, until: Ticks) {
        let stop = until.min(self.end + WIND_DOWN);
        loop {
            let ta = self.queue.first_key_value().map(|((t, _), _)| *t);
            let tb = self.bus.next_event_time();
            let bus_first = match (ta, tb) {
                (None, None) => break,
                (Some(a), Some(b)) => b <= a,
                (None, Some(_)) => true,
                (Some(_), None) => false,
            };
            let t = if bus_first { tb.unwrap() } else { ta.unwrap() };
            if t > stop {
                break;
            }
            if bus_first {
                for ev in self.bus.step(t) {
                    self.deliver(ev);
                }
            } else {
                let ((t, _), action) = self.queue.pop_first().expect("peeked");
                self.now = t;
                self.act(action);
            }
        }
        self.now = self.now.max(stop.min(self.end));
    }

    /// Run to completion and build the report.
    pub fn run(&mut self) -> Report {
        self.run_until(Ticks::MAX);
        self.finish()
    }

    fn live(&self, id: NodeId) -> bool {
        self.node(id).is_some_and(Node::is_live)
    }

    fn offer(&mut self, node: NodeId, frame: Frame) {
        if !self.live(node) {
            return;
        }
        self.offer_unchecked(node, frame);
    }

    fn offer_unchecked(&mut self, node: NodeId, frame: Frame) {
        if let Err(e) = self.bus.offer(frame, node, self.now) {
            log::warn!("offer from node {} rejected: {e}", node.0);
        }
    }

    fn deliver(&mut self, ev: BusEvent) {
        self.now = ev.time;
        let src = ev.frame.source();
        for i in 0..self.nodes.len() {
            let Simulation {
                nodes, env, power, rng, ..
            } = self;
            let node = &mut nodes[i];
            let id = node.id;
            let mut ctx = SampleCtx {
                now: ev.time,
                env,
                power,
                rng,
            };
            let out = node.handle(&ev.frame, id == src, &mut ctx);
            for f in out.frames {
                self.offer(id, f);
            }
            for e in out.effects {
                self.effect(id, e);
            }
        }
        self.trace.push(ev);
    }

    fn sample_ctx_node(&mut self, i: usize) -> (&mut Node, SampleCtx<'_, ChaCha8Rng>) {
        let now = self.now;
        let Simulation {
            nodes, env, power, rng, ..
        } = self;
        (&mut nodes[i], SampleCtx { now, env, power, rng })
    }

    fn act(&mut self, action: Action) {
        let now = self.now;
        match action {
            Action::Sample { node, sensor } => {
                let (n, mut ctx) = self.sample_ctx_node(node);
                let period = n.sensors()[sensor].period;
                let id = n.id;
                if let Some(f) = n.periodic_sample(sensor, &mut ctx) {
                    self.offer(id, f);
                }
                if now + period < self.end {
                    self.schedule(now + period, Action::Sample { node, sensor });
                }
            }
            Action::Gps { node } => {
                let period = self
                    .scenario
                    .node(self.nodes[node].id.0)
                    .map_or(1000, |c| c.gps_period_ms)
                    * 1000;
                let (n, mut ctx) = self.sample_ctx_node(node);
                let id = n.id;
                for f in n.gps_tick(&mut ctx) {
                    self.offer(id, f);
                }
                if now + period < self.end {
                    self.schedule(now + period, Action::Gps { node });
                }
            }
            Action::Thermal { node } => {
                let n = &mut self.nodes[node];
                n.thermal_tick(now);
                let period = n.thermal().map_or(1000, |t| t.period_ms) * 1000;
                if now + period < self.end {
                    self.schedule(now + period, Action::Thermal { node });
                }
            }
            Action::PowerTick => {
                self.power_tick();
                let step = self.scenario.power.step_ms * 1000;
                if now + step <= self.end {
                    self.schedule(now + step, Action::PowerTick);
                }
            }
            Action::Fault(i) => self.fault(i),
            Action::Script(i) => {
                let entry = self.scenario.script[i].clone();
                let outcome = match self.command(&entry.command) {
                    Ok(()) => "ok".to_string(),
                    Err(e) => e,
                };
                self.script_log.push(ScriptRecord {
                    at_s: entry.at_s,
                    command: entry.command,
                    outcome,
                });
            }
            Action::Upload => {
                let _ = self.start_upload();
            }
            Action::RequestTimeout { attempt } => {
                if let UploadState::Requested { attempt: a, record } = self.upload {
                    if a == attempt {
                        self.close_upload(record, UploadOutcome::NoFile);
                    }
                }
            }
            Action::ModemDone { attempt } => self.modem_done(attempt),
            Action::ReflashCheck { step } => self.reflash_check(step),
            Action::SmsInbound => {
                let segments = self.sms_in.take_arrived(now);
                for seg in segments {
                    match self.sms_node_rx.push(&seg) {
                        Ok(frames) => {
                            let Some(sms) = self.sms_node else { continue };
                            for f in frames {
                                if self.live(sms) {
                                    self.sms_injected += 1;
                                }
                                self.offer(sms, f);
                            }
                        }
                        Err(e) => self.transport_errors.push(format!("sms inbound: {e}")),
                    }
                }
            }
            Action::SmsOutbound => {
                for seg in self.sms_out.take_arrived(now) {
                    match self.operator_rx.push(&seg) {
                        Ok(frames) => self.sms_received.extend(frames.into_iter().map(|f| (now, f))),
                        Err(e) => self.transport_errors.push(format!("sms outbound: {e}")),
                    }
                }
            }
            Action::SmsFlush => {
                self.sms_flush_pending = false;
                if let Some(at) = self.sms_out.flush(now) {
                    self.schedule(at, Action::SmsOutbound);
                }
            }
            Action::DriveStop => {
                if let Some(out) = self.outputs_node {
                    let stop = MotionCommand::Stop.code();
                    let _ = self.send(ids::CMD_DRIVE, &[out.0, stop, stop], Route::Bus);
                }
            }
        }
    }

    fn effect(&mut self, node: NodeId, effect: NodeEffect) {
        let now = self.now;
        match effect {
            NodeEffect::FileReceived { from, name, bytes } => {
                if Some(node) == self.uplink {
                    self.file_received(from, name, bytes);
                }
            }
            NodeEffect::Cts(token) => {
                if Some(node) == self.uplink {
                    self.on_cts(token);
                }
            }
            NodeEffect::Status(s) => {
                if Some(node) == self.uplink {
                    self.on_status(s);
                }
            }
            NodeEffect::SmsOutbound(frame) => {
                let bytes = serialize_frame_for_sms(&frame);
                for at in self.sms_out.push(&bytes, now) {
                    self.schedule(at, Action::SmsOutbound);
                }
                if self.sms_out.has_pending() && !self.sms_flush_pending {
                    self.sms_flush_pending = true;
                    let flush = self.scenario.uplink.sms_flush_ms * 1000;
                    self.schedule(now + flush, Action::SmsFlush);
                }
            }
            NodeEffect::Actuator(cmd) => self.env.arm.set_command(cmd, now),
            NodeEffect::Drive { left, right } => {
                let moving = left != MotionCommand::Stop || right != MotionCommand::Stop;
                if moving && self.drive_since.is_none() {
                    self.drive_since = Some(now);
                    self.sites.register_drive_command(self.env.unix_us(now) as f64 / 1e6);
                } else if !moving {
                    if let Some(t0) = self.drive_since.take() {
                        self.env.drive(secs(now - t0));
                    }
                }
            }
            NodeEffect::BridgeBatteries => {
                if !self.power.bridged {
                    self.power.bridge();
                    self.log_power("bridged");
                }
            }
            NodeEffect::SdFull { .. } => self.sd_full_alarms += 1,
            NodeEffect::Transport(msg) => self.transport_errors.push(msg),
        }
    }

    fn log_power(&mut self, event: &str) {
        self.power_log.push(PowerRecord {
            at_s: secs(self.now),
            event: event.to_string(),
            logic_v: self.power.battery_logic(),
            power_v: self.power.battery_power(),
        });
    }

    fn power_tick(&mut self) {
        let cfg = self.scenario.power.clone();
        let mut logic = self.extra_logic_w;
        for n in &self.nodes {
            logic += match n.mode() {
                Mode::Normal | Mode::ReflashLoop => cfg.node_load_w,
                Mode::Hibernate => cfg.hibernate_load_w,
                Mode::Dead => 0.0,
            };
        }
        let motors = self.drive_since.is_some() || self.env.arm.command() != MotionCommand::Stop;
        let power_load = cfg.power_load_w + if motors { cfg.motor_load_w } else { 0.0 };
        let solar = cfg.solar_at(secs(self.now));
        let (next, events) = power_step(
            &self.power,
            Rails {
                logic,
                power: power_load,
            },
            Rails {
                logic: solar,
                power: solar,
            },
            cfg.step_ms * 1000,
        );
        self.power = next;
        self.voltage
            .push((self.now, self.power.battery_logic(), self.power.battery_power()));
        for ev in events {
            match ev {
                PowerEvent::BrownOut { .. } => {
                    self.log_power("brown_out");
                    for i in 0..self.nodes.len() {
                        let id = self.nodes[i].id;
                        if !self.nodes[i].is_live() {
                            continue;
                        }
                        self.bus.withdraw(id);
                        let alarm = self.nodes[i].brown_out(&self.power);
                        self.mark_down(id, DownReason::Hibernate);
                        if let Some(f) = alarm {
                            self.offer_unchecked(id, f);
                        }
                    }
                }
                PowerEvent::Recovered { .. } => {
                    self.log_power("recovered");
                    for i in 0..self.nodes.len() {
                        if self.nodes[i].mode() == Mode::Hibernate {
                            self.nodes[i].wake();
                            let id = self.nodes[i].id;
                            self.mark_up(id);
                        }
                    }
                }
            }
        }
    }

    fn mark_down(&mut self, id: NodeId, reason: DownReason) {
        self.down.entry(id).or_default().push(DownInterval {
            from: self.now,
            to: None,
            reason,
        });
    }

    fn mark_up(&mut self, id: NodeId) {
        if let Some(last) = self.down.get_mut(&id).and_then(|v| v.last_mut()) {
            if last.to.is_none() {
                last.to = Some(self.now);
            }
        }
    }

    fn fault(&mut self, i: usize) {
        let f = self.scenario.faults[i].clone();
        let target = f.target.map(NodeId);
        let note = match f.kind {
            FaultKind::KillNode => {
                let id = target.expect("validated");
                let idx = self.index(id);
                if self.nodes[idx].mode() == Mode::Dead {
                    "already dead".to_string()
                } else {
                    self.bus.withdraw(id);
                    if self.nodes[idx].mode() == Mode::Hibernate {
                        self.mark_up(id);
                    }
                    self.nodes[idx].kill();
                    self.mark_down(id, DownReason::Dead);
                    if Some(id) == self.uplink {
                        self.abort_uplink_work();
                    }
                    "killed".to_string()
                }
            }
            FaultKind::RestoreNode => {
                let id = target.expect("validated");
                let idx = self.index(id);
                if self.nodes[idx].mode() == Mode::Dead {
                    self.nodes[idx].restore();
                    self.mark_up(id);
                    if Some(id) == self.uplink && self.modem.state == ModemState::Failed {
                        self.modem.state = ModemState::Connected;
                    }
                    "restored".to_string()
                } else {
                    "not dead".to_string()
                }
            }
            FaultKind::CorruptUploadByte => {
                let at = f.parameter.unwrap_or(0.0).max(0.0) as usize;
                self.pending_corruption = Some(at);
                format!("next upload corrupted at body byte {at}")
            }
            FaultKind::FailMainModem => {
                let note = self.cut_transfer();
                self.modem.state = ModemState::Failed;
                note
            }
            FaultKind::SdFull => {
                let idx = self.index(target.expect("validated"));
                match self.nodes[idx].sd_mut() {
                    Some(sd) => {
                        sd.fill();
                        "card filled".to_string()
                    }
                    None => "no card".to_string(),
                }
            }
            FaultKind::BatteryDrain => {
                let w = f.parameter.unwrap_or(0.0);
                self.extra_logic_w += w;
                format!("extra {w} W on the logic battery")
            }
        };
        self.fault_log.push(FaultRecord {
            at_s: f.at_s,
            kind: f.kind,
            target: f.target,
            note,
        });
    }

    fn abort_uplink_work(&mut self) {
        match self.upload {
            UploadState::Requested { record, .. } | UploadState::Transferring { record, .. } => {
                self.close_upload(record, UploadOutcome::UplinkDown)
            }
            UploadState::Idle => {}
        }
        if let Some(job) = self.job.take() {
            self.finish_job(job, ReflashOutcome::UplinkDown);
        }
    }

    /// The modem drops mid-transfer: the gateway sees a truncated upload and
    /// the file stays on both cards.
    fn cut_transfer(&mut self) -> String {
        let UploadState::Transferring {
            record,
            ref name,
            started,
            wire_len,
            ..
        } = self.upload
        else {
            return "modem failed while idle".to_string();
        };
        let name = name.clone();
        let cut = self.modem.bytes_by(self.now - started, wire_len);
        let outcome = self.run_upload(
            &name,
            LinkFault {
                corrupt_body_byte: None,
                cut_after: Some(cut),
            },
        );
        let note = format!("modem failed after {cut} of {wire_len} bytes");
        self.settle_upload(record, outcome);
        note
    }

    fn run_upload(&mut self, name: &str, fault: LinkFault) -> Result<UploadResult, UplinkError> {
        let uplink = self.uplink.expect("transfer implies uplink");
        let idx = self.index(uplink);
        let now_ms = (self.scenario.epoch_unix * 1000) as u64 + self.now / 1000;
        let mut session = UploadSession::new(name, &[]);
        let sd = self.nodes[idx]
            .sd_mut()
            .ok_or(UplinkError::NoSuchFile(name.to_string()))?;
        upload_log(&mut session, sd, &self.modem, self.sink.as_dyn(), fault, now_ms)
    }

    fn settle_upload(&mut self, record: usize, result: Result<UploadResult, UplinkError>) {
        let outcome = match result {
            Ok(UploadResult::Acked { crc }) => {
                let r = &self.uploads[record];
                if let (Some(logger), Some(seq)) = (r.logger, r.file.as_deref().and_then(log_file_seq)) {
                    let requested = ticks(r.requested_at_s);
                    self.secured_until.insert(logger, requested);
                    let s = seq.to_le_bytes();
                    let _ = self.send(ids::FILE_DELETE, &[logger.0, s[0], s[1], s[2], s[3]], Route::Bus);
                }
                UploadOutcome::Acked { crc }
            }
            Ok(UploadResult::ChecksumMismatch { local, remote }) => UploadOutcome::ChecksumMismatch { local, remote },
            Err(UplinkError::ModemFailed { bytes_sent }) => UploadOutcome::ModemFailed { bytes_sent },
            Err(UplinkError::NotConnected) => UploadOutcome::NotConnected,
            Err(e) => UploadOutcome::Failed { reason: e.to_string() },
        };
        self.close_upload(record, outcome);
    }

    fn close_upload(&mut self, record: usize, outcome: UploadOutcome) {
        let r = &mut self.uploads[record];
        r.finished_at_s = Some(secs(self.now));
        r.outcome = Some(outcome);
        self.upload = UploadState::Idle;
    }

    fn start_upload(&mut self) -> Result<(), String> {
        let mut record = UploadRecord {
            requested_at_s: secs(self.now),
            logger: self.active_logger,
            file: None,
            bytes: 0,
            finished_at_s: None,
            outcome: None,
        };
        let refuse = |r: &mut UploadRecord, o: UploadOutcome, at: f64| {
            r.finished_at_s = Some(at);
            r.outcome = Some(o);
        };
        let at = secs(self.now);
        let problem = if !matches!(self.upload, UploadState::Idle) {
            Some(UploadOutcome::Busy)
        } else if !self.uplink.is_some_and(|u| self.live(u)) {
            Some(UploadOutcome::UplinkDown)
        } else if self.modem.state != ModemState::Connected {
            Some(UploadOutcome::NotConnected)
        } else if self.active_logger.is_none() {
            Some(UploadOutcome::NoLogger)
        } else {
            None
        };
        if let Some(p) = problem {
            let msg = format!("{p:?}");
            refuse(&mut record, p, at);
            self.uploads.push(record);
            return Err(msg);
        }
        let logger = self.active_logger.expect("checked");
        self.uploads.push(record);
        self.attempt += 1;
        let attempt = self.attempt;
        self.upload = UploadState::Requested {
            attempt,
            record: self.uploads.len() - 1,
        };
        self.send(ids::FILE_REQUEST, &[logger.0], Route::Bus)?;
        let timeout = ticks(self.scenario.uplink.file_request_timeout_s);
        self.schedule(self.now + timeout, Action::RequestTimeout { attempt });
        Ok(())
    }

    fn file_received(&mut self, from: NodeId, name: String, bytes: Vec<u8>) {
        let UploadState::Requested { attempt, record } = self.upload else {
            return;
        };
        let r = &mut self.uploads[record];
        r.file = Some(name.clone());
        r.bytes = bytes.len();
        r.logger = Some(from);
        let idx = self.index(self.uplink.expect("effect came from uplink"));
        let wire_len = 1 + name.len() + 8 + bytes.len() + 2;
        let staged = self.nodes[idx]
            .sd_mut()
            .ok_or_else(|| "uplink has no card".to_string())
            .and_then(|sd| sd.write(&name, bytes).map_err(|e| e.to_string()));
        if let Err(reason) = staged {
            self.close_upload(record, UploadOutcome::Failed { reason });
            return;
        }
        if self.modem.state != ModemState::Connected {
            self.close_upload(record, UploadOutcome::NotConnected);
            return;
        }
        self.upload = UploadState::Transferring {
            attempt,
            record,
            name,
            started: self.now,
            wire_len,
        };
        let done = self.now + self.modem.transfer_time(wire_len);
        self.schedule(done, Action::ModemDone { attempt });
    }

    fn modem_done(&mut self, attempt: u64) {
        let UploadState::Transferring {
            attempt: a,
            record,
            ref name,
            ..
        } = self.upload
        else {
            return;
        };
        if a != attempt {
            return;
        }
        let name = name.clone();
        let fault = LinkFault {
            corrupt_body_byte: self.pending_corruption.take(),
            cut_after: None,
        };
        let result = self.run_upload(&name, fault);
        self.settle_upload(record, result);
    }

    /// Put a frame on the bus from the uplink node, or push it through the
    /// SMS link for the SMS node to inject.
    fn send(&mut self, id: u32, payload: &[u8], via: Route) -> Result<(), String> {
        match via {
            Route::Bus => {
                let u = self.uplink.ok_or("no uplink node")?;
                if !self.live(u) {
                    return Err("uplink node is down".into());
                }
                self.offer(u, command_frame(id, payload, u));
                Ok(())
            }
            Route::Sms => {
                let s = self.sms_node.ok_or("no SMS node")?;
                self.operator_send(&[command_frame(id, payload, s)]);
                Ok(())
            }
        }
    }

    /// One operator text message carrying `frames`.
    fn operator_send(&mut self, frames: &[Frame]) {
        let bytes: Vec<u8> = frames.iter().flat_map(serialize_frame_for_sms).collect();
        let mut arrivals = self.sms_in.push(&bytes, self.now);
        arrivals.extend(self.sms_in.flush(self.now));
        for at in arrivals {
            self.schedule(at, Action::SmsInbound);
        }
    }

    fn command(&mut self, cmd: &Command) -> Result<(), String> {
        match cmd.clone() {
            Command::Upload => self.start_upload(),
            Command::Failover { dead, camera } => self.failover(NodeId(dead), NodeId(camera)),
            Command::Reflash {
                target,
                behavior,
                version,
                size,
                corrupt_staged,
            } => {
                let image = FirmwareImage::synthetic(behavior, version, size).map_err(|e| e.to_string())?;
                self.start_reflash(NodeId(target), image, corrupt_staged, None)
            }
            Command::ActivateBackup => self.activate_backup().map_err(|e| e.to_string()),
            Command::StopForwarding => {
                let s = self.sms_node.ok_or("no SMS node")?;
                self.send(ids::CMD_STOP_FORWARDING, &[s.0], Route::Sms)
            }
            Command::SensorRequest { target, sensor, via } => {
                self.send(ids::CMD_SENSOR_REQUEST, &[target, sensor.code()], via)
            }
            Command::Drive { duration_s } => {
                let out = self.outputs_node.ok_or("no outputs node")?;
                let fwd = MotionCommand::Forward.code();
                self.send(ids::CMD_DRIVE, &[out.0, fwd, fwd], Route::Bus)?;
                self.schedule(self.now + ticks(duration_s), Action::DriveStop);
                Ok(())
            }
            Command::Output { device, command } => {
                let out = self.outputs_node.ok_or("no outputs node")?;
                let dev: Device = device
                    .parse()
                    .map_err(|e: crate::nodes::outputs::OutputError| e.to_string())?;
                self.send(ids::CMD_OUTPUT, &[out.0, dev.code(), command.code()], Route::Bus)
            }
            Command::BridgeBatteries { target } => self.send(ids::CMD_BRIDGE_BATTERIES, &[target], Route::Bus),
            Command::EnablePeriodic { via } => self.send(ids::CMD_ENABLE_PERIODIC, &[BROADCAST], via),
            Command::DisablePeriodic { via } => self.send(ids::CMD_DISABLE_PERIODIC, &[BROADCAST], via),
            Command::ReconnectModem => {
                if self.modem.state == ModemState::Failed {
                    self.modem.state = ModemState::Connected;
                }
                Ok(())
            }
            Command::Raw { id, payload, via } => self.send(id, &payload, via),
        }
    }

    /// Two operator messages over SMS: first silence periodic broadcasts,
    /// then start forwarding.
    pub fn activate_backup(&mut self) -> Result<(), UplinkError> {
        if self.modem.state != ModemState::Failed {
            return Err(UplinkError::MainModemHealthy);
        }
        let s = self.sms_node.ok_or(UplinkError::BackupUnavailable)?;
        if !self.live(s) {
            return Err(UplinkError::BackupUnavailable);
        }
        self.operator_send(&[command_frame(ids::CMD_DISABLE_PERIODIC, &[BROADCAST], s)]);
        self.operator_send(&[command_frame(ids::CMD_START_FORWARDING, &[s.0], s)]);
        self.backup_at = Some(self.now);
        Ok(())
    }

    fn failover(&mut self, dead: NodeId, camera: NodeId) -> Result<(), String> {
        let d = self.node(dead).ok_or("no such logger")?;
        if d.mode() != Mode::Dead {
            return Err(format!("node {} is still alive", dead.0));
        }
        let c = self.node(camera).ok_or("no such camera node")?;
        if c.sd().is_none() {
            return Err(format!("node {} has no card to log to", camera.0));
        }
        let version = c.firmware().version.wrapping_add(1);
        let image =
            FirmwareImage::synthetic(Behavior::Logger, version, STAGED_IMAGE_SIZE).map_err(|e| e.to_string())?;
        let killed_at = self
            .down_intervals(dead)
            .iter()
            .rev()
            .find(|d| d.reason == DownReason::Dead)
            .map(|d| secs(d.from));
        self.failovers.push(FailoverRecord {
            dead,
            camera,
            killed_at_s: killed_at,
            secured_until_s: secs(self.secured_until.get(&dead).copied().unwrap_or(0)),
            requested_at_s: secs(self.now),
            completed_at_s: None,
            outcome: None,
        });
        let rec = self.failovers.len() - 1;
        self.start_reflash(camera, image, false, Some(rec)).inspect_err(|e| {
            self.failovers[rec].outcome = Some(e.clone());
        })
    }

    fn start_reflash(
        &mut self,
        target: NodeId,
        image: FirmwareImage,
        corrupt_staged: bool,
        failover: Option<usize>,
    ) -> Result<(), String> {
        let size = image.bytes.len();
        self.reflashes.push(ReflashRecord {
            target,
            behavior: image.behavior,
            version: image.version,
            size,
            chunks: size.div_ceil(crate::nodes::firmware::REFLASH_CHUNK) as u32,
            started_at_s: secs(self.now),
            finished_at_s: None,
            outcome: None,
            transcript: Vec::new(),
            transcript_strict: true,
        });
        let record = self.reflashes.len() - 1;
        let refuse = |s: &mut Self, o: ReflashOutcome| {
            let r = &mut s.reflashes[record];
            r.finished_at_s = Some(secs(s.now));
            let msg = format!("{o:?}");
            r.outcome = Some(o);
            Err(msg)
        };
        if self.job.is_some() {
            return refuse(self, ReflashOutcome::Busy);
        }
        let Some(uplink) = self.uplink.filter(|u| self.live(*u)) else {
            return refuse(self, ReflashOutcome::UplinkDown);
        };
        // Stage on the uplink card, then check the staged copy.
        let expected_crc = image.crc();
        let name = format!("FW{}.BIN", target.0);
        let mut bytes = image.bytes.clone();
        if corrupt_staged && !bytes.is_empty() {
            let mid = bytes.len() / 2;
            bytes[mid] ^= 0x5A;
        }
        let idx = self.index(uplink);
        let Some(sd) = self.nodes[idx].sd_mut() else {
            return refuse(self, ReflashOutcome::UplinkDown);
        };
        if sd.write(&name, bytes).is_err() {
            return refuse(self, ReflashOutcome::CrcRejected);
        }
        let staged = FirmwareImage::new(
            sd.read(&name).expect("just written").to_vec(),
            image.version,
            image.behavior,
        )
        .expect("size checked at synthesis");
        if verify_image(&staged, expected_crc).is_err() {
            return refuse(self, ReflashOutcome::CrcRejected);
        }
        self.offer(uplink, staged.announce(target).to_frame(uplink));
        let chunks = self.reflashes[record].chunks;
        self.job = Some(ReflashJob {
            record,
            target,
            image: staged,
            chunks,
            next: 0,
            phase: Phase::Streaming,
            step: 0,
            failover,
        });
        if chunks == 0 {
            self.send_finalize();
        } else {
            self.send_chunk(0);
        }
        Ok(())
    }

    fn bump_job(&mut self) {
        self.job_step += 1;
        let step = self.job_step;
        if let Some(job) = self.job.as_mut() {
            job.step = step;
        }
        self.schedule(self.now + DEFAULT_CTS_TIMEOUT, Action::ReflashCheck { step });
    }

    fn send_chunk(&mut self, k: u32) {
        let (Some(job), Some(uplink)) = (self.job.as_ref(), self.uplink) else {
            return;
        };
        let chunk = crate::nodes::firmware::REFLASH_CHUNK;
        let start = k as usize * chunk;
        let end = (start + chunk).min(job.image.bytes.len());
        let frames = paced_chunk_frames(msg_type::FIRMWARE, k, chunk, &job.image.bytes[start..end], uplink)
            .expect("chunk size is a multiple of the frame size");
        let record = job.record;
        for f in frames {
            self.offer(uplink, f);
        }
        self.reflashes[record].transcript.push(TranscriptEntry::Chunk(k));
        self.bump_job();
    }

    fn send_finalize(&mut self) {
        let Some(job) = self.job.as_mut() else { return };
        job.phase = Phase::Finalizing;
        let target = job.target;
        let _ = self.send(ids::CMD_REFLASH_FINALIZE, &[target.0], Route::Bus);
        self.bump_job();
    }

    fn on_cts(&mut self, token: CtsToken) {
        let Some(job) = self.job.as_mut() else { return };
        if job.phase != Phase::Streaming || token.receiver != job.target || token.chunk_index != job.next {
            return;
        }
        job.next += 1;
        let (next, chunks, record) = (job.next, job.chunks, job.record);
        self.reflashes[record]
            .transcript
            .push(TranscriptEntry::Cts(token.chunk_index));
        if next < chunks {
            self.send_chunk(next);
        } else {
            self.send_finalize();
        }
    }

    fn on_status(&mut self, s: NodeStatus) {
        let Some(job) = self.job.as_ref() else { return };
        if job.phase != Phase::Finalizing || s.node != job.target {
            return;
        }
        let job = self.job.take().expect("checked");
        let outcome = if s.accepted && s.behavior == job.image.behavior && s.version == job.image.version {
            ReflashOutcome::Completed
        } else {
            ReflashOutcome::TargetRejected
        };
        self.finish_job(job, outcome);
    }

    fn reflash_check(&mut self, step: u64) {
        let Some(job) = self.job.as_ref() else { return };
        if job.step != step {
            return;
        }
        let job = self.job.take().expect("checked");
        let outcome = match job.phase {
            Phase::Streaming => ReflashOutcome::CtsTimeout,
            Phase::Finalizing => ReflashOutcome::StatusTimeout,
        };
        let _ = self.send(ids::CMD_REFLASH_ABORT, &[job.target.0], Route::Bus);
        self.finish_job(job, outcome);
    }

    fn finish_job(&mut self, job: ReflashJob, outcome: ReflashOutcome) {
        let now = secs(self.now);
        let r = &mut self.reflashes[job.record];
        r.finished_at_s = Some(now);
        r.transcript_strict = transcript_is_strict(&r.transcript);
        if let Some(f) = job.failover {
            let fr = &mut self.failovers[f];
            fr.outcome = Some(format!("{outcome:?}"));
            if outcome == ReflashOutcome::Completed {
                fr.completed_at_s = Some(now);
                self.active_logger = Some(job.target);
            }
        }
        r.outcome = Some(outcome);
    }

    /// Frames from nodes inside their down intervals. A hibernating node
    /// may send its single power alarm.
    fn check_silence(&self) -> Vec<String> {
        let cfg = self.bus.config();
        let mut alarm_used: BTreeMap<(NodeId, usize), bool> = BTreeMap::new();
        let mut out = Vec::new();
        for ev in &self.trace {
            let src = ev.frame.source();
            let Some(intervals) = self.down.get(&src) else {
                continue;
            };
            let start = ev.time - frame_time(&ev.frame, cfg);
            let hit = intervals
                .iter()
                .enumerate()
                .find(|(_, d)| start >= d.from && d.to.is_none_or(|t| start < t));
            let Some((k, d)) = hit else { continue };
            if d.reason == DownReason::Hibernate && ev.frame.id().value() == ids::POWER_ALARM {
                let used = alarm_used.entry((src, k)).or_insert(false);
                if !*used {
                    *used = true;
                    continue;
                }
            }
            out.push(format!(
                "node {} sent id {} at {} us while {:?}",
                src.0,
                ev.frame.id(),
                ev.time,
                d.reason
            ));
        }
        out
    }

    fn finish(&mut self) -> Report {
        self.finished = true;
        let at = secs(self.now);
        for r in &mut self.uploads {
            if r.outcome.is_none() {
                r.outcome = Some(UploadOutcome::Unfinished);
                r.finished_at_s = Some(at);
            }
        }
        if let Some(job) = self.job.take() {
            self.finish_job(job, ReflashOutcome::Unfinished);
        }
        let mut violations = self.check_silence();
        let replay = self.archive().map(|a| replay_verify(&self.trace, a));
        if let Some(d) = replay.as_ref().and_then(|r| r.divergence.as_ref()) {
            violations.push(format!(
                "archived {} diverges from the trace at record {} (byte {}): {}",
                d.file, d.record, d.offset, d.reason
            ));
        }
        if self.bus.pending_len() > 0 {
            violations.push(format!(
                "{} frames still queued at the end of wind-down",
                self.bus.pending_len()
            ));
        }
        let processed = self.gateway().map(|g| g.process(&self.sites));
        let frames_by = |id: NodeId| self.trace.iter().filter(|e| e.frame.source() == id).count();
        let nodes: Vec<NodeReport> = self
            .nodes
            .iter()
            .map(|n| NodeReport {
                id: n.id,
                name: n.name.clone(),
                behavior: n.behavior(),
                version: n.firmware().version,
                mode: n.mode(),
                frames_sent: frames_by(n.id),
                records_logged: n.logger().map_or(0, |l| l.written()),
                records_dropped: n.logger().map_or(0, |l| l.dropped()),
                down: self.down_intervals(n.id).to_vec(),
            })
            .collect();
        Report {
            name: self.scenario.name.clone(),
            seed: self.seed,
            duration_s: self.scenario.duration_s,
            ended_at_s: at,
            frames: self.trace.len(),
            records_logged: nodes.iter().map(|n| n.records_logged).sum(),
            records_dropped: nodes.iter().map(|n| n.records_dropped).sum(),
            nodes,
            uploads_acked: self
                .uploads
                .iter()
                .filter(|u| matches!(u.outcome, Some(UploadOutcome::Acked { .. })))
                .count(),
            uploads: self.uploads.clone(),
            faults: self.fault_log.clone(),
            script: self.script_log.clone(),
            failovers: self.failovers.clone(),
            reflashes: self.reflashes.clone(),
            sms: SmsReport {
                activated_at_s: self.backup_at.map(secs),
                segments_in: self.sms_in.segments_sent(),
                segments_out: self.sms_out.segments_sent(),
                frames_injected: self.sms_injected,
                frames_received: self.sms_received.len(),
            },
            power: self.power_log.clone(),
            sites: processed
                .as_ref()
                .map_or_else(|| self.sites.sites().to_vec(), |p| p.sites.sites().to_vec()),
            gateway: self.gateway().map(Gateway::stats),
            decoded_records: processed.as_ref().map(|p| p.records.len()),
            sd_full_alarms: self.sd_full_alarms,
            transport_errors: self.transport_errors.clone(),
            replay,
            violations,
        }
    }
}

/// Parse, build and run in one call.
pub fn run_scenario(scenario: Scenario, options: SimOptions) -> Result<(Simulation, Report), SimError> {
    let mut sim = Simulation::new(scenario, options)?;
    let report = sim.run();
    Ok((sim, report))
}
