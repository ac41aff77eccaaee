//! When the main modem fails the SMS modem takes over: bus traffic is
//! forwarded to the operator and operator commands come back in.

use dori::scenario::Scenario;
use dori::sim::{run_scenario, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/sms_backup.json"))?;
    let (sim, report) = run_scenario(s, SimOptions::default())?;
    println!("{:?}", report.sms);
    for u in &report.uploads {
        println!("upload at {} s: {:?}", u.requested_at_s, u.outcome);
    }
    for (t, f) in sim.sms_received() {
        println!(
            "{:>7.2} s  from node {}  id {}  {:02x?}",
            *t as f64 / 1e6,
            f.source(),
            f.id(),
            f.payload()
        );
    }
    Ok(())
}
