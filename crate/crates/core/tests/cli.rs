//! The `dori` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dori::crc::crc16;
use dori::nodes::storage::decode_log;

fn dori(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dori")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Run with `--trace` and `--out`; returns (trace, archive dir).
fn run_to(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let trace = dir.join("trace.csv");
    let out = dir.join("out");
    let o = dori(&[
        "run",
        &scenario(name),
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (trace, out.join("archive"))
}

#[test]
fn clean_run_prints_report_and_exits_zero() {
    let o = dori(&["run", &scenario("minimal")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["name"], "minimal");
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn seed_and_until_flags() {
    let o = dori(&["run", &scenario("failover"), "--seed", "99", "--until", "30"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["seed"], 99);
    assert_eq!(report["duration_s"], 30.0);
    assert_eq!(report["failovers"].as_array().unwrap().len(), 0);
}

#[test]
fn saturated_bus_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("overload.json");
    fs::write(
        &p,
        r#"{"name": "overload", "duration_s": 100, "bus": {"bitrate": 1000}, "uplink": {"final_upload": false},
            "nodes": [
              {"id": 1, "behavior": "logger", "sd_capacity": 1048576},
              {"id": 2, "behavior": "sensor_suite", "sensors": [{"kind": "temperature", "period_ms": 10,
                "model": {"type": "signal", "signal": {"shape": "constant", "value": 1}}}]},
              {"id": 4, "behavior": "uplink", "sd_capacity": 1048576}]}"#,
    )
    .unwrap();
    let o = dori(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("still queued"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(
        &p,
        r#"{"duration_s": 5, "nodes": [{"id": 2, "behavior": "sensor_suite",
            "sensors": [{"kind": "temperature", "period_ms": "often"}]}]}"#,
    )
    .unwrap();
    let o = dori(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nodes[0].sensors[0].period_ms"), "{}", stderr(&o));

    let o = dori(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let o = dori(&["run", &scenario("minimal"), "--gateway", "udp://nowhere"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn replay_verify_accepts_untouched_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["failover", "brownout", "drive"] {
        let sub = dir.path().join(name);
        fs::create_dir_all(&sub).unwrap();
        let (trace, archive) = run_to(&sub, name);
        let o = dori(&["replay-verify", trace.to_str().unwrap(), archive.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("clean"));
    }
}

#[test]
fn deleted_record_is_a_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, archive) = run_to(dir.path(), "minimal");
    let index_path = archive.join("index.tsv");
    let index = fs::read_to_string(&index_path).unwrap();
    let name = index.lines().next().unwrap().split('\t').next().unwrap().to_string();
    let (records, err) = decode_log(&fs::read(archive.join(&name)).unwrap());
    assert!(err.is_none() && records.len() > 4);

    // drop one record and keep the index self-consistent so only the replay
    // comparison can notice
    let mut bytes = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if i != 3 {
            r.encode_into(&mut bytes);
        }
    }
    fs::write(archive.join(&name), &bytes).unwrap();
    let fixed: String = index
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f[0] == name {
                format!("{}\t{}\t{:04x}\t{}\n", f[0], bytes.len(), crc16(&bytes), f[3])
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    fs::write(&index_path, fixed).unwrap();

    let o = dori(&["replay-verify", trace.to_str().unwrap(), archive.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverges at record 3"), "{}", stderr(&o));
}

#[test]
fn malformed_trace_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, archive) = run_to(dir.path(), "minimal");
    let mut text = fs::read_to_string(&trace).unwrap();
    text.push_str("not,a,trace,line\n");
    fs::write(&trace, text).unwrap();
    let o = dori(&["replay-verify", trace.to_str().unwrap(), archive.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
