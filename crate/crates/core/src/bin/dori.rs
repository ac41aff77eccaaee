use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dori::replay::{replay_verify_files, write_trace};
use dori::scenario::Scenario;
use dori::sim::{GatewayTarget, SimError, SimOptions, Simulation};

#[derive(Parser)]
#[command(
    name = "dori",
    version,
    about = "Run field-instrument scenarios and check their artifacts"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        /// Write the bus trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// `embedded` or `tcp://host:port`.
        #[arg(long, default_value = "embedded")]
        gateway: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop after this many simulated seconds.
        #[arg(long)]
        until: Option<f64>,
        /// Directory for the gateway archive and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a trace with an archive directory.
    ReplayVerify { trace: PathBuf, archive: PathBuf },
}

const OK: u8 = 0;
const VIOLATION: u8 = 1;
const CONFIG: u8 = 2;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Cmd::Run {
            scenario,
            trace,
            gateway,
            seed,
            until,
            out,
        } => run(scenario, trace, gateway, seed, until, out),
        Cmd::ReplayVerify { trace, archive } => match replay_verify_files(&trace, &archive) {
            Err(e) => fail(CONFIG, e),
            Ok(r) => {
                println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
                match &r.divergence {
                    None => {
                        println!(
                            "clean: {} of {} loggable frames archived",
                            r.covered_frames, r.expected_frames
                        );
                        ExitCode::from(OK)
                    }
                    Some(d) => fail(
                        VIOLATION,
                        format!(
                            "{} diverges at record {} (byte {}): {}",
                            d.file, d.record, d.offset, d.reason
                        ),
                    ),
                }
            }
        },
    }
}

fn run(
    path: PathBuf,
    trace: Option<PathBuf>,
    gateway: String,
    seed: Option<u64>,
    until: Option<f64>,
    out: Option<PathBuf>,
) -> ExitCode {
    let scenario = match Scenario::load(&path) {
        Ok(s) => s,
        Err(e) => return fail(CONFIG, format!("{}: {e}", path.display())),
    };
    let gateway = if gateway == "embedded" {
        GatewayTarget::Embedded
    } else {
        GatewayTarget::Tcp(gateway)
    };
    let mut sim = match Simulation::new(
        scenario,
        SimOptions {
            seed,
            until_s: until,
            gateway,
        },
    ) {
        Ok(s) => s,
        Err(e @ SimError::Config(_)) => return fail(CONFIG, format!("{}: {e}", path.display())),
        Err(e) => return fail(CONFIG, e),
    };
    let report = sim.run();

    if let Some(t) = &trace {
        let written = File::create(t).and_then(|f| write_trace(BufWriter::new(f), sim.trace()));
        if let Err(e) = written {
            return fail(CONFIG, format!("{}: {e}", t.display()));
        }
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(dir) = &out {
        let saved = std::fs::create_dir_all(dir)
            .map_err(|e| e.to_string())
            .and_then(|_| std::fs::write(dir.join("report.json"), &json).map_err(|e| e.to_string()))
            .and_then(|_| match sim.archive() {
                Some(a) => a.export(dir.join("archive")).map_err(|e| e.to_string()),
                None => Ok(()),
            });
        if let Err(e) = saved {
            return fail(CONFIG, format!("{}: {e}", dir.display()));
        }
    } else {
        println!("{json}");
    }

    eprintln!(
        "{}: {} frames, {} records logged, {}/{} uploads acked, {} faults",
        report.name,
        report.frames,
        report.records_logged,
        report.uploads_acked,
        report.uploads.len(),
        report.faults.len()
    );
    if report.ok() {
        ExitCode::from(OK)
    } else {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        ExitCode::from(VIOLATION)
    }
}
