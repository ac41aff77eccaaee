//! Drive the instrument between sites; the gateway splits GPS fixes and
//! readings into one record per site.

use dori::scenario::Scenario;
use dori::sim::{run_scenario, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/drive.json"))?;
    let (sim, report) = run_scenario(s, SimOptions::default())?;
    for site in &report.sites {
        println!(
            "site {}  from {:.0}  to {:?}  mean position {:?}",
            site.site_id, site.start_time, site.end_time, site.mean_position
        );
    }
    let processed = sim.gateway().expect("embedded gateway").process(sim.sites());
    println!(
        "{} records, {} readings, {} normalized magnetometer samples",
        processed.records.len(),
        processed.readings.len(),
        processed.magnetometer.len()
    );
    Ok(())
}
