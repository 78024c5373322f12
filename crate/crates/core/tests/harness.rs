use proptest::prelude::*;
use subq_core::adversary::Strategy;
use subq_core::harness::{run_experiment, run_trial, write_experiment, ExperimentConfig, Outcome};
use subq_core::net::WorldOptions;
use subq_core::protocol::{Mode, ProtocolKind};

fn small(protocol: ProtocolKind) -> ExperimentConfig {
    ExperimentConfig {
        protocol,
        n: 90,
        lambda: 20,
        iterations: Some(if protocol == ProtocolKind::Psync13 { 3 } else { 20 }),
        delta: 4,
        adversary: "adaptive-eager".parse().unwrap(),
        trials: 12,
        ..ExperimentConfig::default()
    }
}

#[test]
fn experiments_repeat_exactly() {
    for p in [ProtocolKind::Sync13, ProtocolKind::Sync12, ProtocolKind::Psync13] {
        let a = run_experiment(&small(p)).unwrap();
        let b = run_experiment(&small(p)).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn trace_replay_matches_counted_multicasts() {
    for p in [ProtocolKind::Sync13, ProtocolKind::Sync12, ProtocolKind::Psync13] {
        let cfg = small(p);
        for seed in 1..=4 {
            let t = run_trial(&cfg, seed, WorldOptions { trace: true, inbox_digests: false }).unwrap();
            let trace = t.world.trace().unwrap();
            assert_eq!(trace.honest_multicasts(), t.report.honest_multicasts);
            assert_eq!(t.report.honest_multicasts, t.world.stats().honest_multicasts);
        }
    }
}

#[test]
fn outputs_have_one_row_per_trial() {
    let cfg = ExperimentConfig { trials: 25, n: 120, ..small(ProtocolKind::Sync12) };
    let exp = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_experiment(&exp, dir.path()).unwrap();

    let mut rdr = csv::Reader::from_path(dir.path().join("trials.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "seed");
    assert_eq!(&header[1], "outcome");
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 25);
    let seeds: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(seeds, (1..=25).collect::<Vec<_>>());

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["f"], 48);
    assert_eq!(summary["summary"]["trials"], 25);
    let total: u64 = Outcome::ALL.iter().map(|o| summary["summary"]["outcomes"][o.name()]["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 25);
}

#[test]
fn corruption_budget_follows_resilience() {
    let c = |protocol, n| ExperimentConfig { protocol, n, epsilon: 0.1, ..ExperimentConfig::default() }.f();
    assert_eq!(c(ProtocolKind::Sync12, 300), 120);
    assert_eq!(c(ProtocolKind::Sync13, 300), 70);
    assert_eq!(c(ProtocolKind::Psync13, 100), 23);
}

#[test]
fn toml_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let cfg = ExperimentConfig { adversary: Strategy::BitFlip, bit_specific: false, ..small(ProtocolKind::Sync13) };
    std::fs::write(&path, cfg.to_toml()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn warmup_runs_agree_under_eager_corruption(
        kind in prop_oneof![Just(ProtocolKind::Sync13), Just(ProtocolKind::Sync12), Just(ProtocolKind::Psync13)],
        n in 4u32..16,
        seed in 1u64..10_000,
    ) {
        let cfg = ExperimentConfig {
            protocol: kind,
            mode: Mode::Warmup,
            n,
            lambda: n,
            iterations: Some(if kind == ProtocolKind::Psync13 { 3 } else { 2 * n }),
            delta: 3,
            adversary: "adaptive-eager:uniform".parse().unwrap(),
            ..ExperimentConfig::default()
        };
        let t = run_trial(&cfg, seed, WorldOptions { trace: true, inbox_digests: false }).unwrap();
        prop_assert_eq!(t.report.outcome, Outcome::ConsistentValid);
        prop_assert_eq!(t.world.trace().unwrap().honest_multicasts(), t.report.honest_multicasts);
        prop_assert!(t.report.corrupted <= cfg.f());
    }
}
