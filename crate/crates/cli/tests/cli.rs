use std::path::Path;
use std::process::{Command, Output};

fn subq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subq")).args(args).output().expect("binary runs")
}

fn rows(dir: &Path, file: &str) -> usize {
    csv::Reader::from_path(dir.join(file)).unwrap().records().count()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = subq(&["run", "--protocol", "sync12", "--n", "60", "--lambda", "16", "--trials", "5", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(dir.path(), "trials.csv"), 5);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["n"], 60);
    assert!(String::from_utf8_lossy(&o.stdout).contains("consistent-valid"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "protocol = \"sync13\"\nmode = \"warmup\"\nn = 10\ntrials = 3\n").unwrap();
    let o = subq(&["config", "--config", cfg.to_str().unwrap(), "--n", "13", "--seed", "40"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("protocol = \"sync13\""));
    assert!(text.contains("n = 13"));
    assert!(text.contains("base_seed = 40"));
    assert!(text.contains("trials = 3"));
}

#[test]
fn violations_set_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = subq(&["run", "--protocol", "psync13", "--n", "60", "--lambda", "16", "--trials", "2", "--max_rounds", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_input_exits_two() {
    let o = subq(&["run", "--protocol", "sync99", "--out", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sync99"));
    let o = subq(&["run", "--mode", "committee", "--n", "20", "--lambda", "40"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_files_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = subq(&["run", "--protocol", "sync12", "--mode", "warmup", "--n", "7", "--trials", "2", "--seed", "9", "--trace", "--out", out]);
    assert!(o.status.success());
    for seed in [9, 10] {
        let text = std::fs::read_to_string(dir.path().join(format!("trace-{seed}.jsonl"))).unwrap();
        assert!(text.lines().count() > 10);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["event"].is_string());
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |d: &str| {
        vec!["run", "--protocol", "psync13", "--n", "60", "--lambda", "16", "--iterations", "3", "--adversary", "adaptive-eager:uniform", "--trials", "6", "--out", d]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let args = args(d.to_str().unwrap());
        subq(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }
    assert_eq!(std::fs::read(a.join("trials.csv")).unwrap(), std::fs::read(b.join("trials.csv")).unwrap());
}

#[test]
fn dr_pairs_report_both_sender_bits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = subq(&["dr", "--n", "60", "--lambda", "16", "--bb", "true", "--adversary", "dr-aprime", "--strongly_adaptive", "true", "--trials", "3", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(dir.path(), "dr.csv"), 6);
    let o = subq(&["dr", "--n", "60", "--lambda", "16", "--bb", "true", "--adversary", "dr-aprime", "--trials", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}
