use std::process::Command;

use twopart::harness::{read_records, RecordKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twopart"))
}

const TINY: &str = r#"
schema_version = 1
[family]
kind = "gaussian-ar"
order = 1
theta0 = [-0.4]
mixing_rate = 0.6
[scheme]
lambda = 0.3
candidate_count = 6
anchor_truth = true
mde_mc_budget = 200
distance_mc_budget = 100
training_blocks = 200
i_max = 200
l_cap = 4
[experiment]
n_grid = [2, 4]
trials = 2
eval_blocks = 200
oracle_training_blocks = 300
identify_mc_budget = 200
"#;

fn write_tmp(name: &str, text: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("twopart-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn redundancy_writes_parseable_csv() {
    let cfg = write_tmp("tiny.toml", TINY);
    let out = cfg.with_file_name("tiny.csv");
    let status = bin()
        .args(["redundancy", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3", "--threads", "1", "--delta-mode", "paper"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let records = read_records(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(records.iter().filter(|r| r.kind == RecordKind::Trial).count(), 4);
    assert!(records.iter().all(|r| r.delta_mode == twopart::scheme::DeltaMode::Paper));
    // Paper mode at this scale accepts the first database entry.
    assert!(records.iter().filter(|r| r.kind == RecordKind::Trial).all(|r| r.database_index == 1));
}

#[test]
fn identify_runs() {
    let cfg = write_tmp("id.toml", TINY);
    let out = bin().args(["identify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let records = read_records(out.stdout.as_slice()).unwrap();
    assert!(records.iter().any(|r| r.kind == RecordKind::Summary));
}

#[test]
fn config_errors_exit_two() {
    let bad = write_tmp("bad.toml", &TINY.replace("trials = 2", "trials = 0"));
    assert_eq!(bin().args(["redundancy", "--config"]).arg(&bad).status().unwrap().code(), Some(2));
    let broken = write_tmp("broken.toml", "schema_version = [");
    let out = bin().args(["identify", "--config"]).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(bin().args(["redundancy"]).status().unwrap().code(), Some(2));
    assert_eq!(bin().args(["redundancy", "--delta-mode", "sloppy"]).status().unwrap().code(), Some(2));
}

#[test]
fn invariants_pass_and_negative_control_fails() {
    let ok = bin().args(["invariants", "--seed", "11"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 12);
    let bad = bin().args(["invariants", "--inject-corruption"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL two-stage-round-trip"));
}
