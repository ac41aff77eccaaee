//! Drain the battery until the logic rail browns out, then recover on solar.

use dori::scenario::Scenario;
use dori::sim::{run_scenario, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/brownout.json"))?;
    let (sim, report) = run_scenario(s, SimOptions::default())?;
    for p in &report.power {
        println!(
            "{:>6.2} s  {:<12} logic {:.2} V  power {:.2} V",
            p.at_s, p.event, p.logic_v, p.power_v
        );
    }
    for (t, logic, power) in sim.voltage_history().iter().step_by(16) {
        println!("  {:>6.2} s  {logic:.3} {power:.3}", *t as f64 / 1e6);
    }
    for n in &report.nodes {
        println!("node {} down {:?}", n.id, n.down);
    }
    Ok(())
}
