//! Every bundled scenario, plus the checks that need a whole run.

use std::path::PathBuf;

use dori::bus::NodeId;
use dori::ids::{self, is_file_transfer};
use dori::replay::replay_verify;
use dori::scenario::Scenario;
use dori::sim::{run_scenario, ReflashOutcome, SimOptions};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn bundled(name: &str) -> Scenario {
    Scenario::load(dir().join(format!("{name}.json"))).unwrap()
}

#[test]
fn every_bundled_scenario_is_clean() {
    let mut seen = 0;
    for entry in std::fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        let s = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let (sim, r) = run_scenario(s, SimOptions::default()).unwrap();
        assert!(r.ok(), "{}: {:?}", path.display(), r.violations);
        let replay = replay_verify(sim.trace(), sim.archive().unwrap());
        assert!(replay.clean, "{}: {:?}", path.display(), replay.divergence);
        assert!(sim.archive().unwrap().verify().is_empty());
        seen += 1;
    }
    assert!(seen >= 8);
}

#[test]
fn sms_side_mirrors_bus_after_forwarding_starts() {
    let (sim, r) = run_scenario(bundled("sms_backup"), SimOptions::default()).unwrap();
    assert!(r.ok());
    let sms = NodeId(5);
    let start = sim
        .trace()
        .iter()
        .position(|e| e.frame.id().value() == ids::CMD_START_FORWARDING)
        .expect("forwarding started");
    let want: Vec<_> = sim.trace()[start + 1..]
        .iter()
        .filter(|e| e.frame.source() != sms)
        .map(|e| (e.frame.id(), e.frame.payload().to_vec()))
        .collect();
    let got: Vec<_> = sim
        .sms_received()
        .iter()
        .map(|(_, f)| (f.id(), f.payload().to_vec()))
        .collect();
    assert!(!want.is_empty());
    assert_eq!(got, want);
    assert!(sim.sms_received().windows(2).all(|w| w[0].0 <= w[1].0));
}

#[test]
fn file_transfer_traffic_is_never_logged() {
    for name in ["reflash", "failover"] {
        let (sim, _) = run_scenario(bundled(name), SimOptions::default()).unwrap();
        assert!(sim.trace().iter().any(|e| is_file_transfer(e.frame.id())), "{name}");
        let r = replay_verify(sim.trace(), sim.archive().unwrap());
        let loggable = sim.trace().iter().filter(|e| !is_file_transfer(e.frame.id())).count();
        assert_eq!(r.expected_frames, loggable);
    }
}

#[test]
fn reflash_outcomes_and_final_versions() {
    let (_, r) = run_scenario(bundled("reflash"), SimOptions::default()).unwrap();
    let outcomes: Vec<_> = r
        .reflashes
        .iter()
        .map(|x| (x.target.0, x.version, x.outcome.clone()))
        .collect();
    assert_eq!(
        outcomes,
        vec![
            (2, 2, Some(ReflashOutcome::CrcRejected)),
            (2, 2, Some(ReflashOutcome::Completed)),
            (3, 2, Some(ReflashOutcome::Completed)),
            (2, 3, Some(ReflashOutcome::CtsTimeout)),
        ]
    );
    assert!(r.reflashes.iter().all(|x| x.transcript_strict));
    let node = |id: u8| r.nodes.iter().find(|n| n.id == NodeId(id)).unwrap();
    assert_eq!(node(2).version, 2);
    assert_eq!(node(3).version, 2);
    assert_eq!(format!("{:?}", node(3).behavior), "Logger");
}

#[test]
fn minimal_run_counts() {
    let (sim, r) = run_scenario(bundled("minimal"), SimOptions::default()).unwrap();
    let readings = sim.trace().iter().filter(|e| e.frame.source() == NodeId(2)).count();
    assert_eq!(readings, 10);
    assert_eq!(r.uploads.len(), 1);
    assert_eq!(r.uploads_acked, 1);
}
