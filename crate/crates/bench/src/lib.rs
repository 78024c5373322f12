//! Benchmark-only crate; the benches live under `benches/`.
//!
//! Fixed configurations shared by the benches.

use subq_core::harness::ExperimentConfig;
use subq_core::protocol::{Mode, ProtocolKind};

/// The committee settings the acceptance runs use, one trial each.
pub fn committee(protocol: ProtocolKind) -> ExperimentConfig {
    let psync = protocol == ProtocolKind::Psync13;
    ExperimentConfig {
        protocol,
        mode: Mode::Committee,
        n: 300,
        lambda: if psync { 30 } else { 40 },
        iterations: psync.then_some(8),
        delta: 8,
        adversary: "adaptive-eager".parse().expect("known strategy"),
        trials: 1,
        ..ExperimentConfig::default()
    }
}
