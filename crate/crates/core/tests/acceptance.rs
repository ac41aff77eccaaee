//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dori::bus::{frame_time, Bus, BusConfig, BusEvent, Frame, FrameId, NodeId, Ticks};
use dori::crc::crc16;
use dori::filters::{ExponentialAverage, Kalman1D, RollingAverage};
use dori::gateway::{normalize_magnetometer, ArmTimeline};
use dori::ids;
use dori::nodes::firmware::Behavior;
use dori::nodes::Mode;
use dori::scenario::Scenario;
use dori::sensors::parse_nmea_rmc;
use dori::sensors::{onewire_search, OneWireId, OneWireNetwork};
use dori::sensors::{tilt_compensated_heading, BiasCalibration};
use dori::sensors::{SensorKind, SensorReading, SensorValue};
use dori::sim::{ReflashOutcome, SimOptions, Simulation, UploadOutcome};
use dori::transport::{fragment, Reassembler, TransferKind, TransportMessage, MAX_BROADCAST_PAYLOAD};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))).expect("bundled scenario loads")
}

fn simulate(name: &str) -> (Simulation, dori::sim::Report) {
    let mut sim = Simulation::new(scenario(name), SimOptions::default()).expect("scenario builds");
    let report = sim.run();
    (sim, report)
}

// 1 -----------------------------------------------------------------------

/// Independent replay: at each delivered frame's slot start, every node's
/// oldest undelivered offer made by then is a contender; the delivered frame
/// must be the lowest (id, node) among them.
fn arbitration() -> Outcome {
    let cfg = BusConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let mut slots = 0usize;
    let mut contended = 0usize;
    for schedule in 0..1000 {
        let mut bus = Bus::new(cfg).unwrap();
        let n_nodes = rng.gen_range(2..=8u8);
        for n in 0..n_nodes {
            bus.register(NodeId(n));
        }
        let mut offers: Vec<(Ticks, NodeId, Frame)> = Vec::new();
        for _ in 0..rng.gen_range(1..=40) {
            let node = NodeId(rng.gen_range(0..n_nodes));
            // bursts on a coarse grid force contention
            let t = rng.gen_range(0..6u64) * 500;
            let id = FrameId::standard(rng.gen_range(0..0x800)).unwrap();
            let len = rng.gen_range(0..=8);
            let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            offers.push((t, node, Frame::new(id, &payload, node).unwrap()));
        }
        offers.sort_by_key(|o| o.0);
        for (t, node, f) in &offers {
            bus.offer(f.clone(), *node, *t).unwrap();
        }
        let delivered = bus.drain();
        ensure!(
            delivered.len() == offers.len(),
            "schedule {schedule}: {} offered, {} delivered",
            offers.len(),
            delivered.len()
        );
        // per node FIFO of (offer time, frame)
        let mut queues: BTreeMap<NodeId, Vec<(Ticks, Frame)>> = BTreeMap::new();
        for (t, n, f) in &offers {
            queues.entry(*n).or_default().push((*t, f.clone()));
        }
        let mut last_end = 0;
        for ev in &delivered {
            let start = ev.time - frame_time(&ev.frame, &cfg);
            ensure!(start >= last_end, "schedule {schedule}: overlapping frames");
            last_end = ev.time;
            let heads: Vec<(u32, NodeId)> = queues
                .iter()
                .filter_map(|(n, q)| {
                    q.first()
                        .filter(|(t, _)| *t <= start)
                        .map(|(_, f)| (f.id().value(), *n))
                })
                .collect();
            let best = heads.iter().min().copied();
            ensure!(
                best == Some((ev.frame.id().value(), ev.frame.source())),
                "schedule {schedule}: slot at {start} sent {:?} from {:?}, expected {:?}",
                ev.frame.id(),
                ev.frame.source(),
                best
            );
            let q = queues.get_mut(&ev.frame.source()).unwrap();
            ensure!(q[0].1 == ev.frame, "schedule {schedule}: payload mismatch");
            q.remove(0);
            slots += 1;
            contended += usize::from(heads.len() > 1);
        }
        ensure!(queues.values().all(Vec::is_empty), "schedule {schedule}: frames lost");
    }
    Ok(format!(
        "1000 schedules, {slots} slots ({contended} contended), none lost"
    ))
}

// 2 -----------------------------------------------------------------------

fn transport_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut frames_total = 0usize;
    for i in 0..500 {
        let kind = if i % 2 == 0 {
            TransferKind::Broadcast
        } else {
            TransferKind::LargeTransfer
        };
        let max = if kind == TransferKind::Broadcast {
            MAX_BROADCAST_PAYLOAD
        } else {
            10_240
        };
        let len = match i % 10 {
            0 => 0,
            2 => max,
            _ => rng.gen_range(0..=max),
        };
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let msg = TransportMessage::new(kind, rng.gen_range(0..16), payload, NodeId(rng.gen_range(0..32)));
        let frames = fragment(&msg).map_err(|e| format!("message {i} ({len} B): {e}"))?;
        ensure!(
            frames.iter().all(|f| f.payload().len() <= 8),
            "message {i}: frame over 8 bytes"
        );
        frames_total += frames.len();
        let mut r = Reassembler::new(dori::transport::DEFAULT_SESSION_TIMEOUT);
        let mut got = None;
        for (k, f) in frames.iter().enumerate() {
            if let Some(m) = r.handle(f, k as Ticks).map_err(|e| format!("message {i}: {e}"))? {
                ensure!(got.is_none(), "message {i} completed twice");
                got = Some(m);
            }
        }
        ensure!(
            got.as_ref() == Some(&msg),
            "message {i} ({kind:?}, {len} B) did not round-trip"
        );
    }
    Ok(format!("500 messages, {frames_total} frames, bit-exact"))
}

// 3 -----------------------------------------------------------------------

fn crc_bitwise(data: &[u8]) -> u16 {
    let mut crc = 0u16;
    for &b in data {
        for i in 0..8 {
            let bit = (b >> i) & 1 == 1;
            let top = crc & 1 == 1;
            crc >>= 1;
            if bit != top {
                crc ^= 0xA001;
            }
        }
    }
    crc
}

fn crc() -> Outcome {
    let check = crc16(b"123456789");
    ensure!(check == 0xBB3D, "check value {check:#06x}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let len = rng.gen_range(0..512);
        let mut buf: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let c = crc16(&buf);
        ensure!(c == crc_bitwise(&buf), "buffer {i}: table and bitwise disagree");
        buf.extend_from_slice(&c.to_le_bytes());
        ensure!(crc16(&buf) == 0, "buffer {i}: residue {:#06x}", crc16(&buf));
    }
    Ok("check 0xBB3D; residue zero on 1000 buffers".into())
}

// 4 -----------------------------------------------------------------------

fn filters() -> Outcome {
    // (a) Q = 0 gives P_k = P0 / (1 + k P0 / R), so the error shrinks by
    // 1 / (1 + k P0 / R). A diffuse prior (P0 / R = 1e4) gets below 1e-6 by
    // step 200.
    let (z, x0) = (17.25, -3.0);
    let mut k = Kalman1D::with_prior(0.0, 0.5, x0, 0.5e4).unwrap();
    let mut prev = (z - x0).abs();
    let mut reached = None;
    let mut last_p = k.variance();
    for step in 1..=200 {
        let x = k.update(z);
        let err = (x - z).abs();
        ensure!((0.0..=1.0).contains(&k.gain()), "gain {} out of range", k.gain());
        ensure!(k.variance() <= last_p, "variance grew at step {step}");
        ensure!(err < prev || err == 0.0, "error did not decrease at step {step}");
        if reached.is_none() && err < 1e-6 * (z - x0).abs() {
            reached = Some(step);
        }
        prev = err;
        last_p = k.variance();
    }
    let Some(step) = reached else {
        return Err(format!("error {prev} after 200 steps"));
    };

    // (b)
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for w in [1usize, 2, 5, 16, 100] {
        let mut f = RollingAverage::new(w).unwrap();
        let xs: Vec<f64> = (0..500).map(|_| rng.gen_range(-1e3..1e3)).collect();
        for i in 0..xs.len() {
            let got = f.update(xs[i]);
            let win = &xs[i.saturating_sub(w - 1)..=i];
            let want = win.iter().sum::<f64>() / win.len() as f64;
            let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            ensure!(rel <= 1e-12, "window {w} step {i}: {got} vs {want}");
        }
    }

    // (c)
    let xs = [3.0, -1.5, 8.25, 0.0, 2.0, 100.0];
    for alpha in [0.0, 0.5, 1.0] {
        let mut f = ExponentialAverage::new(alpha).unwrap();
        let mut hand = xs[0];
        ensure!(f.update(xs[0]) == hand, "alpha {alpha}: seed");
        for &x in &xs[1..] {
            hand = alpha * x + (1.0 - alpha) * hand;
            let got = f.update(x);
            ensure!(got == hand, "alpha {alpha}: {got} vs {hand}");
        }
    }
    Ok(format!(
        "Kalman below 1e-6 at step {step}; rolling worst rel {worst:.1e}; exponential exact"
    ))
}

// 5 -----------------------------------------------------------------------

fn upload_protocol() -> Outcome {
    let (sim, r) = simulate("minimal");
    ensure!(r.ok(), "violations {:?}", r.violations);
    ensure!(
        matches!(r.uploads.as_slice(), [u] if matches!(u.outcome, Some(UploadOutcome::Acked { .. }))),
        "clean run uploads {:?}",
        r.uploads
    );
    let logger = sim.node(NodeId(1)).unwrap();
    let sd = logger.sd().unwrap();
    ensure!(!sd.contains("LOG0.BIN"), "acked log still on the card");
    let stored = sim.archive().unwrap().get("LOG0.BIN").ok_or("archive lacks LOG0.BIN")?;
    ensure!(stored.verify(), "archived crc mismatch");

    let mut sim = Simulation::new(scenario("upload_corruption"), SimOptions::default()).unwrap();
    sim.run_until(15_000_000);
    let first = sim.uploads()[0].clone();
    ensure!(
        matches!(first.outcome, Some(UploadOutcome::ChecksumMismatch { .. })),
        "corrupted upload {:?}",
        first.outcome
    );
    ensure!(sim.gateway().unwrap().stats().nacked == 1, "gateway did not nack");
    ensure!(sim.archive().unwrap().is_empty(), "corrupt upload archived");
    let name = first.file.clone().unwrap();
    ensure!(
        sim.node(NodeId(1)).unwrap().sd().unwrap().contains(&name),
        "{name} deleted after a nack"
    );
    let r = sim.run();
    ensure!(
        matches!(r.uploads[1].outcome, Some(UploadOutcome::Acked { .. })) && r.uploads[1].file.as_ref() == Some(&name),
        "retained log was not resent: {:?}",
        r.uploads[1]
    );
    ensure!(
        !sim.node(NodeId(1)).unwrap().sd().unwrap().contains(&name),
        "{name} kept after ack"
    );
    Ok(format!(
        "ack deletes; corrupt upload nacked and {name} kept until the retry"
    ))
}

// 6 -----------------------------------------------------------------------

fn reflash_protocol() -> Outcome {
    let mut sim = Simulation::new(scenario("reflash"), SimOptions::default()).unwrap();
    // corrupted image at 2 s
    sim.run_until(4_000_000);
    let rec = &sim.reflashes()[0];
    ensure!(
        rec.outcome == Some(ReflashOutcome::CrcRejected),
        "corrupt image: {:?}",
        rec.outcome
    );
    let n2 = sim.node(NodeId(2)).unwrap();
    ensure!(
        n2.firmware().version == 1 && n2.mode() == Mode::Normal,
        "corrupt image touched the target"
    );
    let leaked = sim.trace().iter().any(|e| {
        let id = e.frame.id().value();
        id == ids::CMD_REFLASH_ENTER || (ids::LARGE_ANNOUNCE_BASE..ids::LARGE_ANNOUNCE_BASE + 0x100).contains(&id)
    });
    ensure!(!leaked, "a rejected image reached the bus");

    let r = sim.run();
    ensure!(r.ok(), "violations {:?}", r.violations);
    let recs = sim.reflashes();
    for (i, rec) in recs.iter().enumerate().skip(1) {
        ensure!(rec.transcript_strict, "session {i} transcript not strict");
        ensure!(!rec.transcript.is_empty(), "session {i} empty transcript");
    }
    ensure!(
        recs[1].outcome == Some(ReflashOutcome::Completed),
        "session 1: {:?}",
        recs[1].outcome
    );
    ensure!(
        recs[2].outcome == Some(ReflashOutcome::Completed),
        "session 2: {:?}",
        recs[2].outcome
    );
    let cam = sim.node(NodeId(3)).unwrap();
    ensure!(
        cam.behavior() == Behavior::Logger && cam.firmware().version == 2,
        "camera is {:?} v{}",
        cam.behavior(),
        cam.firmware().version
    );
    ensure!(
        recs[3].outcome == Some(ReflashOutcome::CtsTimeout),
        "aborted session: {:?}",
        recs[3].outcome
    );
    let n2 = sim.node(NodeId(2)).unwrap();
    ensure!(
        n2.behavior() == Behavior::SensorSuite && n2.firmware().version == 2 && n2.mode() == Mode::Normal,
        "abort changed node 2: {:?} v{} {:?}",
        n2.behavior(),
        n2.firmware().version,
        n2.mode()
    );
    let chunks: usize = recs.iter().map(|r| r.transcript.len()).sum();
    Ok(format!(
        "{} sessions, {chunks} transcript entries, all strict",
        recs.len()
    ))
}

// 7 -----------------------------------------------------------------------

fn failover() -> Outcome {
    let (sim, r) = simulate("failover");
    ensure!(r.ok(), "violations {:?}", r.violations);
    let f = r.failovers.first().ok_or("no failover recorded")?;
    let done = f.completed_at_s.ok_or("failover never completed")?;
    ensure!(sim.active_logger() == Some(NodeId(3)), "camera is not logging");
    let replay = r.replay.as_ref().unwrap();
    ensure!(replay.clean, "replay divergence {:?}", replay.divergence);
    let (lo, hi) = ((f.secured_until_s * 1e6) as u64, (done * 1e6) as u64);
    for g in &replay.gaps {
        ensure!(
            g.from_us >= lo && g.to_us <= hi,
            "gap {}..{} us outside the failover window {lo}..{hi}",
            g.from_us,
            g.to_us
        );
    }
    ensure!(replay.files.len() >= 2, "expected logs from both loggers");
    Ok(format!(
        "killed {:.1} s, failover {:.2} s; {} of {} frames archived, only gap {:.2}..{:.2} s",
        f.killed_at_s.unwrap_or(f64::NAN),
        done,
        replay.covered_frames,
        replay.expected_frames,
        lo as f64 / 1e6,
        hi as f64 / 1e6
    ))
}

// 8 -----------------------------------------------------------------------

fn magnetometer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let v = |rng: &mut ChaCha8Rng, s: f64| [rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s)];
        let free = v(&mut rng, 60.0);
        let b_raised = v(&mut rng, 20.0);
        let b_lowered = v(&mut rng, 20.0);
        let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let cal = BiasCalibration::from_reference_readings(free, add(free, b_raised), add(free, b_lowered));
        // arm sweeps 0 -> 90 over 90 s; samples at the angles of interest
        let mut arm = ArmTimeline::new();
        arm.push(0, 0.0).unwrap();
        arm.push(90_000_000, 90.0).unwrap();
        for angle in [0.0, 45.0, 90.0] {
            let t = angle / 90.0;
            let bias = [0, 1, 2].map(|i| b_lowered[i] + t * (b_raised[i] - b_lowered[i]));
            let raw = add(free, bias);
            let reading = SensorReading::new(
                (angle * 1e6) as u64,
                NodeId(2),
                SensorKind::Mag,
                SensorValue::Vector(raw),
            )
            .unwrap();
            let n = normalize_magnetometer(&reading, &arm, Some(&cal)).map_err(|e| e.to_string())?;
            let c = n.corrected.ok_or("no correction")?;
            for i in 0..3 {
                let d = (c[i] - free[i]).abs();
                worst = worst.max(d);
                ensure!(d <= 1e-9, "arm {angle}: axis {i} off by {d:e}");
            }
        }
    }
    Ok(format!("50 calibrations x 3 angles, worst {worst:.1e}"))
}

// 9 -----------------------------------------------------------------------

/// Body-frame field for a level-frame field rotated by pitch then roll.
fn body_field(heading: f64, pitch: f64, roll: f64, h: f64, z: f64) -> [f64; 3] {
    let (sh, ch) = heading.to_radians().sin_cos();
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    let (lx, ly, lz) = (h * ch, -h * sh, z);
    let (x, z1) = (lx * cp - lz * sp, lx * sp + lz * cp);
    let (y, z) = (ly * cr + z1 * sr, -ly * sr + z1 * cr);
    [x, y, z]
}

fn heading() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let h = rng.gen_range(0.0..360.0);
        let p = rng.gen_range(-30.0..=30.0);
        let r = rng.gen_range(-30.0..=30.0);
        let mag = body_field(h, p, r, rng.gen_range(10.0..40.0), rng.gen_range(-60.0..60.0));
        let got = tilt_compensated_heading(mag, p, r).map_err(|e| format!("case {i}: {e}"))?;
        let d = ((got - h + 540.0).rem_euclid(360.0) - 180.0).abs();
        worst = worst.max(d);
        ensure!(d < 1e-6, "case {i}: heading {h}, pitch {p}, roll {r} gave {got}");
    }
    Ok(format!("100 attitudes, worst {worst:.1e} deg"))
}

// 10 ----------------------------------------------------------------------

fn onewire() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..200 {
        let n = if i < 65 { i } else { rng.gen_range(0..=64) };
        let mut ids: Vec<u64> = Vec::new();
        while ids.len() < n {
            // share prefixes often so the search has to branch deep
            let id = if !ids.is_empty() && rng.gen_bool(0.5) {
                ids[rng.gen_range(0..ids.len())] ^ (1u64 << rng.gen_range(0..64))
            } else {
                rng.gen()
            };
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let mut net = OneWireNetwork::new(ids.iter().map(|&d| OneWireId(d)));
        let found: Vec<u64> = onewire_search(&mut net).devices.iter().map(|d| d.0).collect();
        let mut want = ids.clone();
        want.sort_unstable();
        ensure!(
            found == want,
            "set {i} ({n} devices) enumerated {} devices",
            found.len()
        );
    }
    let twelve: Vec<OneWireId> = (0..12u64)
        .map(|k| OneWireId(0x28 | (0x1000 + k * 0x3F1) << 8))
        .collect();
    let mut net = OneWireNetwork::new(twelve.iter().copied());
    let out = onewire_search(&mut net);
    ensure!(out.devices.len() == 12, "12-sensor chain found {}", out.devices.len());
    Ok(format!(
        "200 sets exact; 12-sensor chain complete in {} queries",
        out.queries
    ))
}

// 11 ----------------------------------------------------------------------

fn nmea() -> Outcome {
    use chrono::{DateTime, Datelike, Timelike};
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mutations = 0usize;
    for i in 0..50 {
        // two-digit years pivot at 80, so stay inside 2000..2080
        let t: i64 = rng.gen_range(946_684_800..3_471_292_800);
        let dt = DateTime::from_timestamp(t, 0).unwrap();
        let lat = rng.gen_range(0.0..90.0f64);
        let lon = rng.gen_range(0.0..180.0f64);
        let body = format!(
            "GPRMC,{:02}{:02}{:02}.00,A,{:02}{:07.4},{},{:03}{:07.4},{},0.0,0.0,{:02}{:02}{:02},,,A",
            dt.hour(),
            dt.minute(),
            dt.second(),
            lat.trunc(),
            lat.fract() * 60.0,
            if i % 2 == 0 { 'N' } else { 'S' },
            lon.trunc(),
            lon.fract() * 60.0,
            if i % 3 == 0 { 'E' } else { 'W' },
            dt.day(),
            dt.month(),
            dt.year() % 100
        );
        let cs = body.bytes().fold(0u8, |a, b| a ^ b);
        let sentence = format!("${body}*{cs:02X}");
        let fix = parse_nmea_rmc(&sentence).map_err(|e| format!("sentence {i} {sentence}: {e}"))?;
        ensure!(
            fix.unix_us == t * 1_000_000,
            "sentence {i}: time {} vs {}",
            fix.unix_us,
            t * 1_000_000
        );
        let bytes = sentence.as_bytes();
        let star = sentence.rfind('*').unwrap();
        for pos in 1..star {
            for c in 0x20u8..0x7F {
                if c == bytes[pos] {
                    continue;
                }
                let mut m = bytes.to_vec();
                m[pos] = c;
                let m = String::from_utf8(m).unwrap();
                ensure!(parse_nmea_rmc(&m).is_err(), "accepted mutation {m}");
                mutations += 1;
            }
        }
    }
    let hand = [
        (
            "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W",
            48.0 + 7.038 / 60.0,
            11.0 + 31.0 / 60.0,
        ),
        (
            "$GPRMC,081836,A,3751.65,S,14507.36,E,000.0,360.0,130998,011.3,E",
            -(37.0 + 51.65 / 60.0),
            145.0 + 7.36 / 60.0,
        ),
        (
            "$GPRMC,225446,A,4916.45,N,12311.12,W,000.5,054.7,191194,020.3,E",
            49.274_166_666_7,
            -123.185_333_333_3,
        ),
    ];
    for (s, lat, lon) in hand {
        let cs = s[1..].bytes().fold(0u8, |a, b| a ^ b);
        let fix = parse_nmea_rmc(&format!("{s}*{cs:02X}")).map_err(|e| format!("{s}: {e}"))?;
        let (glat, glon) = (fix.latitude.ok_or("no latitude")?, fix.longitude.ok_or("no longitude")?);
        ensure!(
            (glat - lat).abs() < 1e-6 && (glon - lon).abs() < 1e-6,
            "{s}: {glat},{glon}"
        );
    }
    Ok(format!(
        "{mutations} single-character mutations rejected; 3 hand conversions within 1e-6"
    ))
}

// 12 ----------------------------------------------------------------------

fn brown_out() -> Outcome {
    let (sim, r) = simulate("brownout");
    ensure!(r.ok(), "violations {:?}", r.violations);
    let volts = sim.voltage_history();
    let down = volts
        .iter()
        .find(|v| v.1 < 11.0)
        .ok_or("logic battery never fell below 11.0 V")?
        .0;
    let up = volts
        .iter()
        .find(|v| v.0 > down && v.1 > 11.5)
        .ok_or("logic battery never recovered above 11.5 V")?
        .0;
    for n in sim.nodes() {
        let frames: Vec<&BusEvent> = sim
            .trace()
            .iter()
            .filter(|e| {
                e.frame.source() == n.id && {
                    let start = e.time - frame_time(&e.frame, &BusConfig::default());
                    start >= down && start < up
                }
            })
            .collect();
        ensure!(
            frames.len() == 1 && frames[0].frame.id().value() == ids::POWER_ALARM,
            "node {} sent {} frames while browned out",
            n.id.0,
            frames.len()
        );
        let resumed = sim.trace().iter().any(|e| e.frame.source() == n.id && e.time > up);
        ensure!(
            resumed || n.behavior() == Behavior::Uplink,
            "node {} stayed silent after recovery",
            n.id.0
        );
    }
    Ok(format!(
        "below 11.0 V at {:.2} s, above 11.5 V at {:.2} s; one alarm per node in between",
        down as f64 / 1e6,
        up as f64 / 1e6
    ))
}

// 13 ----------------------------------------------------------------------

fn determinism() -> Outcome {
    let mut checked = Vec::new();
    for name in ["failover", "sms_backup", "drive", "brownout"] {
        let (a, ra) = simulate(name);
        let (b, rb) = simulate(name);
        let ta: Vec<String> = a.trace().iter().map(BusEvent::trace_line).collect();
        let tb: Vec<String> = b.trace().iter().map(BusEvent::trace_line).collect();
        ensure!(ta == tb, "{name}: traces differ");
        let fa: Vec<_> = a
            .archive()
            .unwrap()
            .files()
            .iter()
            .map(|f| (&f.name, &f.bytes, f.crc))
            .collect();
        let fb: Vec<_> = b
            .archive()
            .unwrap()
            .files()
            .iter()
            .map(|f| (&f.name, &f.bytes, f.crc))
            .collect();
        ensure!(fa == fb, "{name}: archives differ");
        ensure!(
            serde_json::to_string(&ra).unwrap() == serde_json::to_string(&rb).unwrap(),
            "{name}: reports differ"
        );
        checked.push(format!("{name} {} frames", ta.len()));
    }
    Ok(checked.join(", "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("arbitration ordering", arbitration),
        ("transport round trip", transport_round_trip),
        ("crc", crc),
        ("filters", filters),
        ("upload protocol", upload_protocol),
        ("reflash protocol", reflash_protocol),
        ("logger failover", failover),
        ("magnetometer normalization", magnetometer),
        ("heading recovery", heading),
        ("1-wire search", onewire),
        ("nmea", nmea),
        ("brown-out", brown_out),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str())) {
            continue;
        }
        let started = std::time::Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = started.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{ms} ms]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{ms} ms]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
