//! Monte Carlo driver: configuration, seeded parallel trials, outcome
//! classification, trace audits and summary statistics.

mod audit;
mod classify;
mod config;
pub mod dr;
mod output;
mod runner;
mod stats;

pub use audit::{audit, counter_names, protocol_node, AuditResult, ProposeSample};
pub use classify::{classify, Outcome, ValidityRule};
pub use config::{ConfigError, ExperimentConfig, InputPreset, FIELDS};
pub use output::{write_experiment, write_trials_csv};
pub use runner::{
    build_world, build_world_with, finish_trial, run_experiment, run_trial, Experiment, HarnessError, TrialReport,
    TrialRun,
};
pub use stats::{wilson, AuditSummary, Distribution, Frequency, SummaryStats};
