//! Kill the logger mid-run and promote the camera node to take over.

use dori::bus::NodeId;
use dori::replay::replay_verify;
use dori::scenario::Scenario;
use dori::sim::{run_scenario, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/failover.json"))?;
    let (sim, report) = run_scenario(s, SimOptions::default())?;
    for f in &report.failovers {
        println!("{f:?}");
    }
    println!("logger down: {:?}", sim.down_intervals(NodeId(1)));
    let replay = replay_verify(sim.trace(), sim.archive().expect("embedded gateway"));
    println!(
        "{} of {} loggable frames archived",
        replay.covered_frames, replay.expected_frames
    );
    for g in &replay.gaps {
        println!(
            "gap {:.2}..{:.2} s ({} frames)",
            g.from_us as f64 / 1e6,
            g.to_us as f64 / 1e6,
            g.frames
        );
    }
    for m in &replay.files {
        println!("{}: {} records", m.file, m.records);
    }
    Ok(())
}
