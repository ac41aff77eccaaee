//! Discrete-event model of the shared broadcast bus.
//!
//! Every node queues frames with [`Bus::offer`]. When the bus goes idle the
//! head frame of every node's queue contends for the next slot and the
//! numerically lowest identifier wins, exactly like dominant bits on a CAN
//! wire. Losers stay queued and contend again at the following slot, so no
//! frame is ever dropped. Time is kept in integer microseconds.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

/// Simulation time in microseconds.
pub type Ticks = u64;

pub const MAX_PAYLOAD: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("node {0} is not registered on the bus")]
    UnknownNode(NodeId),
    #[error("payload of {0} bytes exceeds the 8 byte frame limit")]
    OversizePayload(usize),
    #[error("identifier {value:#x} does not fit a {width:?} identifier")]
    IdentifierRange { value: u32, width: IdWidth },
    #[error("arbitration needs at least one contender")]
    EmptyContention,
    #[error("offer at {offered} precedes current bus time {now}")]
    OfferInPast { offered: Ticks, now: Ticks },
    #[error("bitrate must be positive")]
    ZeroBitrate,
    #[error("malformed trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u8);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdWidth {
    Standard11,
    Extended29,
}

impl IdWidth {
    fn limit(self) -> u32 {
        match self {
            IdWidth::Standard11 => 1 << 11,
            IdWidth::Extended29 => 1 << 29,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameId {
    value: u32,
    width: IdWidth,
}

impl FrameId {
    pub fn new(value: u32, width: IdWidth) -> Result<Self, BusError> {
        if value >= width.limit() {
            return Err(BusError::IdentifierRange { value, width });
        }
        Ok(FrameId { value, width })
    }

    pub fn standard(value: u32) -> Result<Self, BusError> {
        Self::new(value, IdWidth::Standard11)
    }

    pub fn extended(value: u32) -> Result<Self, BusError> {
        Self::new(value, IdWidth::Extended29)
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn width(self) -> IdWidth {
        self.width
    }

    /// Arbitration key: lower wins. On an equal numeric value the standard
    /// frame wins, as its IDE bit is dominant.
    fn priority(self) -> (u32, u8) {
        let ide = match self.width {
            IdWidth::Standard11 => 0,
            IdWidth::Extended29 => 1,
        };
        (self.value, ide)
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.width {
            IdWidth::Standard11 => write!(f, "{:03x}", self.value),
            IdWidth::Extended29 => write!(f, "{:08x}", self.value),
        }
    }
}

/// One bus message.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    id: FrameId,
    payload: Vec<u8>,
    source: NodeId,
}

impl Frame {
    pub fn new(id: FrameId, payload: &[u8], source: NodeId) -> Result<Self, BusError> {
        if payload.len() > MAX_PAYLOAD {
            return Err(BusError::OversizePayload(payload.len()));
        }
        Ok(Frame {
            id,
            payload: payload.to_vec(),
            source,
        })
    }

    pub fn id(&self) -> FrameId {
        self.id
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn with_source(mut self, source: NodeId) -> Self {
        self.source = source;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusConfig {
    pub bitrate: u64,
    pub frame_overhead_bits: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            bitrate: 125_000,
            frame_overhead_bits: 47,
        }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), BusError> {
        if self.bitrate == 0 {
            return Err(BusError::ZeroBitrate);
        }
        Ok(())
    }
}

/// Time on the wire in whole microseconds, rounded up. Bit stuffing is not
/// modelled.
pub fn frame_time(frame: &Frame, cfg: &BusConfig) -> Ticks {
    let bits = cfg.frame_overhead_bits + 8 * frame.payload.len() as u64;
    (bits * 1_000_000).div_ceil(cfg.bitrate)
}

/// Index of the winning frame: lowest identifier.
pub fn arbitrate(contenders: &[Frame]) -> Result<usize, BusError> {
    contenders
        .iter()
        .enumerate()
        .min_by_key(|(_, f)| f.id.priority())
        .map(|(i, _)| i)
        .ok_or(BusError::EmptyContention)
}

/// A frame that finished transmission at `time`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusEvent {
    pub time: Ticks,
    pub frame: Frame,
}

impl BusEvent {
    /// `time_us,src,id_hex,len,payload_hex`
    pub fn trace_line(&self) -> String {
        let mut hex = String::with_capacity(self.frame.payload.len() * 2);
        for b in &self.frame.payload {
            hex.push_str(&format!("{b:02x}"));
        }
        format!(
            "{},{},{},{},{}",
            self.time,
            self.frame.source,
            self.frame.id,
            self.frame.payload.len(),
            hex
        )
    }

    pub fn parse_trace_line(line: &str, line_no: usize) -> Result<BusEvent, BusError> {
        let bad = |reason: &str| BusError::Trace {
            line: line_no,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 comma separated fields"));
        }
        let time = fields[0].parse::<u64>().map_err(|_| bad("time"))?;
        let src = fields[1].parse::<u8>().map_err(|_| bad("src"))?;
        let raw = u32::from_str_radix(fields[2], 16).map_err(|_| bad("id"))?;
        let id = match fields[2].len() {
            3 => FrameId::standard(raw),
            8 => FrameId::extended(raw),
            _ => return Err(bad("id must be 3 or 8 hex digits")),
        }
        .map_err(|e| bad(&e.to_string()))?;
        let len = fields[3].parse::<usize>().map_err(|_| bad("len"))?;
        let hex = fields[4];
        if hex.len() != len * 2 {
            return Err(bad("payload length does not match len"));
        }
        let payload = (0..len)
            .map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|_| bad("payload hex"))?;
        let frame = Frame::new(id, &payload, NodeId(src)).map_err(|e| bad(&e.to_string()))?;
        Ok(BusEvent { time, frame })
    }
}

#[derive(Debug, Clone)]
struct Pending {
    offered_at: Ticks,
    frame: Frame,
}

#[derive(Debug, Clone)]
struct InFlight {
    start: Ticks,
    end: Ticks,
    pending: Pending,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BusStats {
    pub offered: u64,
    pub delivered: u64,
    pub withdrawn: u64,
}

/// One arbitration decision, recorded when slot logging is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub start: Ticks,
    pub contenders: Vec<FrameId>,
    pub winner: FrameId,
}

#[derive(Debug, Clone)]
pub struct Bus {
    cfg: BusConfig,
    now: Ticks,
    busy_until: Ticks,
    queues: BTreeMap<NodeId, VecDeque<Pending>>,
    in_flight: Option<InFlight>,
    stats: BusStats,
    slot_log: Option<Vec<Slot>>,
}

impl Bus {
    pub fn new(cfg: BusConfig) -> Result<Self, BusError> {
        cfg.validate()?;
        Ok(Bus {
            cfg,
            now: 0,
            busy_until: 0,
            queues: BTreeMap::new(),
            in_flight: None,
            stats: BusStats::default(),
            slot_log: None,
        })
    }

    pub fn config(&self) -> &BusConfig {
        &self.cfg
    }

    pub fn now(&self) -> Ticks {
        self.now
    }

    pub fn stats(&self) -> BusStats {
        self.stats
    }

    pub fn register(&mut self, node: NodeId) {
        self.queues.entry(node).or_default();
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.queues.keys().copied()
    }

    pub fn is_registered(&self, node: NodeId) -> bool {
        self.queues.contains_key(&node)
    }

    /// Record every arbitration decision from now on.
    pub fn enable_slot_log(&mut self) {
        self.slot_log.get_or_insert_with(Vec::new);
    }

    pub fn take_slot_log(&mut self) -> Vec<Slot> {
        self.slot_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Queue `frame` for transmission by `node` at `time`. The frame's source
    /// is stamped with `node`.
    pub fn offer(&mut self, frame: Frame, node: NodeId, time: Ticks) -> Result<(), BusError> {
        if frame.payload.len() > MAX_PAYLOAD {
            return Err(BusError::OversizePayload(frame.payload.len()));
        }
        if time < self.now {
            return Err(BusError::OfferInPast {
                offered: time,
                now: self.now,
            });
        }
        let queue = self.queues.get_mut(&node).ok_or(BusError::UnknownNode(node))?;
        let pending = Pending {
            offered_at: time,
            frame: frame.with_source(node),
        };
        // FIFO per node, ordered by offer time.
        let at = queue.partition_point(|p| p.offered_at <= time);
        queue.insert(at, pending);
        self.stats.offered += 1;
        Ok(())
    }

    /// Drop every frame `node` has queued but not yet started sending.
    /// Returns how many were removed.
    pub fn withdraw(&mut self, node: NodeId) -> usize {
        let n = self.queues.get_mut(&node).map(|q| {
            let n = q.len();
            q.clear();
            n
        });
        let n = n.unwrap_or(0);
        self.stats.withdrawn += n as u64;
        n
    }

    pub fn pending_len(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum::<usize>() + usize::from(self.in_flight.is_some())
    }

    pub fn is_idle(&self) -> bool {
        self.pending_len() == 0
    }

    fn next_slot_start(&self) -> Option<Ticks> {
        self.queues
            .values()
            .filter_map(|q| q.front())
            .map(|p| p.offered_at)
            .min()
            .map(|earliest| earliest.max(self.busy_until))
    }

    fn start_slot(&mut self, start: Ticks) {
        let mut heads: Vec<(NodeId, Frame)> = Vec::new();
        for (node, q) in &self.queues {
            if let Some(p) = q.front() {
                if p.offered_at <= start {
                    heads.push((*node, p.frame.clone()));
                }
            }
        }
        let frames: Vec<Frame> = heads.iter().map(|(_, f)| f.clone()).collect();
        // Heads are collected in node order, so equal identifiers resolve
        // towards the lower node id.
        let winner = arbitrate(&frames).expect("slot opened with no contenders");
        let node = heads[winner].0;
        if let Some(log) = self.slot_log.as_mut() {
            log.push(Slot {
                start,
                contenders: frames.iter().map(Frame::id).collect(),
                winner: frames[winner].id(),
            });
        }
        let pending = self
            .queues
            .get_mut(&node)
            .and_then(VecDeque::pop_front)
            .expect("winner queue empty");
        let end = start + frame_time(&pending.frame, &self.cfg);
        self.in_flight = Some(InFlight { start, end, pending });
    }

    /// Completion time of the next delivery, if any frame is queued.
    pub fn next_event_time(&self) -> Option<Ticks> {
        if let Some(f) = &self.in_flight {
            return Some(f.end);
        }
        let start = self.next_slot_start()?;
        let mut best: Option<&Pending> = None;
        for q in self.queues.values() {
            if let Some(p) = q.front() {
                if p.offered_at <= start && best.is_none_or(|b| p.frame.id.priority() < b.frame.id.priority()) {
                    best = Some(p);
                }
            }
        }
        best.map(|p| start + frame_time(&p.frame, &self.cfg))
    }

    /// Advance to `until`, returning every frame whose transmission completed
    /// in `(now, until]`. A frame that wins arbitration before `until` but
    /// finishes after it stays on the wire and is delivered by a later step.
    pub fn step(&mut self, until: Ticks) -> Vec<BusEvent> {
        let until = until.max(self.now);
        let mut out = Vec::new();
        loop {
            if let Some(f) = &self.in_flight {
                if f.end > until {
                    break;
                }
                let f = self.in_flight.take().unwrap();
                debug_assert!(f.start >= f.pending.offered_at);
                self.busy_until = f.end;
                self.stats.delivered += 1;
                out.push(BusEvent {
                    time: f.end,
                    frame: f.pending.frame,
                });
                continue;
            }
            match self.next_slot_start() {
                Some(start) if start <= until => self.start_slot(start),
                _ => break,
            }
        }
        self.now = until;
        out
    }

    /// Step until every queued frame is delivered.
    pub fn drain(&mut self) -> Vec<BusEvent> {
        let mut out = Vec::new();
        while let Some(t) = self.next_event_time() {
            out.extend(self.step(t));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(id: u32, len: usize, src: u8) -> Frame {
        Frame::new(FrameId::standard(id).unwrap(), &vec![0xAA; len], NodeId(src)).unwrap()
    }

    fn bus_with(nodes: &[u8]) -> Bus {
        let mut bus = Bus::new(BusConfig::default()).unwrap();
        for n in nodes {
            bus.register(NodeId(*n));
        }
        bus
    }

    #[test]
    fn identifier_ranges() {
        assert!(FrameId::standard(0x7FF).is_ok());
        assert!(FrameId::standard(0x800).is_err());
        assert!(FrameId::extended((1 << 29) - 1).is_ok());
        assert!(FrameId::extended(1 << 29).is_err());
    }

    #[test]
    fn frame_times_at_default_rate() {
        let cfg = BusConfig::default();
        assert_eq!(frame_time(&f(1, 8, 1), &cfg), 888);
        assert_eq!(frame_time(&f(1, 0, 1), &cfg), 376);
        let fast = BusConfig {
            bitrate: 250_000,
            ..cfg
        };
        assert_eq!(frame_time(&f(1, 8, 1), &fast), 444);
        assert_eq!(frame_time(&f(1, 0, 1), &fast), 188);
    }

    #[test]
    fn oversize_payload_rejected() {
        let id = FrameId::standard(0x100).unwrap();
        assert_eq!(Frame::new(id, &[0; 9], NodeId(1)), Err(BusError::OversizePayload(9)));
    }

    #[test]
    fn arbitration_basics() {
        assert_eq!(arbitrate(&[]), Err(BusError::EmptyContention));
        assert_eq!(arbitrate(&[f(0x7FF, 0, 1)]), Ok(0));
        assert_eq!(arbitrate(&[f(0x100, 0, 1), f(0x0FF, 0, 2)]), Ok(1));
    }

    #[test]
    fn standard_beats_extended_on_equal_value() {
        let s = Frame::new(FrameId::standard(0x10).unwrap(), &[], NodeId(1)).unwrap();
        let e = Frame::new(FrameId::extended(0x10).unwrap(), &[], NodeId(2)).unwrap();
        assert_eq!(arbitrate(&[e, s]), Ok(1));
    }

    #[test]
    fn single_offer_delivered_after_one_frame_time() {
        let mut bus = bus_with(&[1, 2]);
        bus.offer(f(0x100, 1, 1), NodeId(1), 0).unwrap();
        let events = bus.step(10_000);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].time, frame_time(&f(0x100, 1, 1), bus.config()));
        assert_eq!(events[0].frame.payload(), &[0xAA]);
    }

    #[test]
    fn unknown_node_rejected() {
        let mut bus = bus_with(&[1]);
        assert_eq!(
            bus.offer(f(1, 0, 9), NodeId(9), 0),
            Err(BusError::UnknownNode(NodeId(9)))
        );
    }

    #[test]
    fn three_contenders_ascending() {
        let mut bus = bus_with(&[1, 2, 3]);
        bus.offer(f(0x300, 2, 1), NodeId(1), 0).unwrap();
        bus.offer(f(0x100, 2, 2), NodeId(2), 0).unwrap();
        bus.offer(f(0x200, 2, 3), NodeId(3), 0).unwrap();
        let ids: Vec<u32> = bus.step(1_000_000).iter().map(|e| e.frame.id().value()).collect();
        assert_eq!(ids, vec![0x100, 0x200, 0x300]);
    }

    #[test]
    fn empty_bus_steps_to_nothing() {
        let mut bus = bus_with(&[1]);
        assert!(bus.step(1_000).is_empty());
        assert_eq!(bus.now(), 1_000);
    }

    #[test]
    fn same_node_is_fifo() {
        let mut bus = bus_with(&[1]);
        bus.offer(f(0x300, 0, 1), NodeId(1), 0).unwrap();
        bus.offer(f(0x100, 0, 1), NodeId(1), 0).unwrap();
        let ids: Vec<u32> = bus.drain().iter().map(|e| e.frame.id().value()).collect();
        assert_eq!(ids, vec![0x300, 0x100]);
    }

    #[test]
    fn in_flight_frame_is_not_preempted() {
        let mut bus = bus_with(&[1, 2]);
        bus.offer(f(0x400, 8, 1), NodeId(1), 0).unwrap();
        assert!(bus.step(100).is_empty());
        bus.offer(f(0x001, 0, 2), NodeId(2), 100).unwrap();
        let events = bus.drain();
        assert_eq!(events[0].frame.id().value(), 0x400);
        assert_eq!(events[0].time, 888);
        assert_eq!(events[1].time, 888 + 376);
    }

    #[test]
    fn offer_in_past_rejected() {
        let mut bus = bus_with(&[1]);
        bus.step(500);
        assert!(matches!(
            bus.offer(f(1, 0, 1), NodeId(1), 10),
            Err(BusError::OfferInPast { .. })
        ));
    }

    #[test]
    fn withdraw_counts() {
        let mut bus = bus_with(&[1, 2]);
        bus.offer(f(1, 0, 1), NodeId(1), 0).unwrap();
        bus.offer(f(2, 0, 1), NodeId(1), 0).unwrap();
        assert_eq!(bus.withdraw(NodeId(1)), 2);
        assert!(bus.drain().is_empty());
        assert_eq!(bus.stats().withdrawn, 2);
    }

    #[test]
    fn trace_line_round_trip() {
        let ev = BusEvent {
            time: 1234,
            frame: Frame::new(FrameId::standard(0x4a1).unwrap(), &[1, 0xff], NodeId(7)).unwrap(),
        };
        let line = ev.trace_line();
        assert_eq!(line, "1234,7,4a1,2,01ff");
        assert_eq!(BusEvent::parse_trace_line(&line, 1).unwrap(), ev);
        let ext = BusEvent {
            time: 5,
            frame: Frame::new(FrameId::extended(0x1abc).unwrap(), &[], NodeId(0)).unwrap(),
        };
        assert_eq!(BusEvent::parse_trace_line(&ext.trace_line(), 1).unwrap(), ext);
        assert!(BusEvent::parse_trace_line("1,2,3", 4).is_err());
    }
}
