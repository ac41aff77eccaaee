//! Run any scenario file, optionally with a different seed, and print the
//! report. `cargo run --example run_scenario -- scenarios/minimal.json 42`

use dori::scenario::Scenario;
use dori::sim::{run_scenario, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/minimal.json").into());
    let seed = args.next().map(|s| s.parse()).transpose()?;
    let (_, report) = run_scenario(
        Scenario::load(&path)?,
        SimOptions {
            seed,
            ..SimOptions::default()
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.ok() {
        std::process::exit(1);
    }
    Ok(())
}
