//! Reflash scenario: a corrupted image is rejected, good images install,
//! and an aborted transfer times out with the old firmware kept.

use dori::scenario::Scenario;
use dori::sim::{run_scenario, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/reflash.json"))?;
    let (_, report) = run_scenario(s, SimOptions::default())?;
    for r in &report.reflashes {
        println!(
            "{:>5.2} s  node {} -> {:?} v{} ({} bytes, {} chunks): {:?}, strict pacing {}",
            r.started_at_s, r.target, r.behavior, r.version, r.size, r.chunks, r.outcome, r.transcript_strict
        );
    }
    for n in &report.nodes {
        println!("node {} {:<8} {:?} v{}", n.id, n.name, n.behavior, n.version);
    }
    Ok(())
}
