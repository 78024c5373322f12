use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::audit::{audit, ProposeSample};
use super::classify::{classify_world, Outcome, ValidityRule};
use super::config::{ConfigError, ExperimentConfig};
use super::stats::SummaryStats;
use crate::adversary::{Adversary, AdversaryError, StrategyContext};
use crate::fmine::FMine;
use crate::net::{NodeLogic, RunStatus, SimError, World, WorldOptions};
use crate::protocol::{BroadcastFrontEnd, ProtocolError};
use crate::types::{Bit, NodeId, RoundIndex};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("trial with seed {seed}: {source}")]
    Sim { seed: u64, source: SimError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One row of `trials.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub seed: u64,
    pub outcome: Outcome,
    /// Multicasts by so-far-honest nodes, retracted ones included.
    pub honest_multicasts: u64,
    /// Round of the last forever-honest output, or rounds executed.
    pub rounds: u32,
    /// Highest iteration reached by a forever-honest node.
    pub iterations: u32,
    pub corrupted: u32,
    pub retractions: u64,
    /// Per node: `0`/`1` output, `-` none, `x` corrupt.
    pub outputs: String,
    pub audits: BTreeMap<String, u64>,
}

/// A finished trial with its world kept for inspection.
pub struct TrialRun {
    pub report: TrialReport,
    pub world: World,
    pub inputs: Vec<Bit>,
    pub status: RunStatus,
    pub samples: Vec<ProposeSample>,
}

/// Builds the world for one seed with the configured adversary.
pub fn build_world(cfg: &ExperimentConfig, seed: u64, options: WorldOptions) -> Result<(World, Vec<Bit>), HarnessError> {
    let cx = StrategyContext { n: cfg.n, f: cfg.f(), seed, bb_sender: cfg.bb_sender() };
    let adversary = cfg.adversary.build(cx)?;
    build_world_with(cfg, seed, adversary, options)
}

/// Builds the world for one seed with an explicit adversary.
pub fn build_world_with(
    cfg: &ExperimentConfig,
    seed: u64,
    adversary: Box<dyn Adversary>,
    options: WorldOptions,
) -> Result<(World, Vec<Bit>), HarnessError> {
    let params = cfg.protocol_params(seed);
    params.validate()?;
    let inputs = cfg.inputs.assign(cfg.n, seed);
    let nodes: Vec<Box<dyn NodeLogic>> = (0..cfg.n)
        .map(NodeId)
        .map(|id| match cfg.bb_sender() {
            Some(sender) => {
                Box::new(BroadcastFrontEnd::new(params, id, sender, cfg.sender_input)) as Box<dyn NodeLogic>
            }
            None => params.node(id, inputs[id.index()], RoundIndex(1)),
        })
        .collect();
    let fmine = FMine::new(seed, params.difficulty()?, cfg.bit_specific);
    let world = World::with_options(cfg.world_config(seed), nodes, fmine, adversary, options)
        .map_err(|source| HarnessError::Sim { seed, source })?;
    Ok((world, inputs))
}

pub fn run_trial(cfg: &ExperimentConfig, seed: u64, options: WorldOptions) -> Result<TrialRun, HarnessError> {
    let (world, inputs) = build_world(cfg, seed, options)?;
    finish_trial(cfg, seed, world, inputs)
}

/// Runs a built world to completion and reports on it.
pub fn finish_trial(cfg: &ExperimentConfig, seed: u64, mut world: World, inputs: Vec<Bit>) -> Result<TrialRun, HarnessError> {
    let status = world.run().map_err(|source| HarnessError::Sim { seed, source })?;
    let rule = match cfg.bb_sender() {
        Some(sender) => ValidityRule::Broadcast { sender, input: cfg.sender_input },
        None => ValidityRule::Agreement(inputs.clone()),
    };
    let outcome = classify_world(&world, &rule);
    let start = RoundIndex(1 + u32::from(cfg.bb));
    let result = audit(&world, cfg.protocol_params(seed), start);
    let report = report(seed, outcome, &world, result.counters);
    Ok(TrialRun { report, world, inputs, status, samples: result.samples })
}

fn report(seed: u64, outcome: Outcome, world: &World, audits: BTreeMap<String, u64>) -> TrialReport {
    let ledger = world.ledger();
    let honest: Vec<NodeId> = (0..world.n()).map(NodeId).filter(|id| ledger.forever_honest(*id)).collect();
    let all_done = honest.iter().all(|id| world.outputs()[id.index()].is_some());
    let rounds = if all_done {
        honest.iter().filter_map(|id| world.outputs()[id.index()].map(|(_, r)| r.0)).max().unwrap_or(0)
    } else {
        world.rounds_executed()
    };
    let outputs = (0..world.n())
        .map(|i| match (ledger.is_corrupt(NodeId(i)), world.outputs()[i as usize]) {
            (true, _) => 'x',
            (false, Some((b, _))) => if b == Bit::One { '1' } else { '0' },
            (false, None) => '-',
        })
        .collect();
    TrialReport {
        seed,
        outcome,
        honest_multicasts: world.stats().honest_multicasts,
        rounds,
        iterations: honest.iter().map(|id| world.node(*id).iteration()).max().unwrap_or(0),
        corrupted: ledger.len() as u32,
        retractions: world.stats().retractions,
        outputs,
        audits,
    }
}

/// All trials of an experiment, in seed order.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub reports: Vec<TrialReport>,
    pub summary: SummaryStats,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    cfg.validate()?;
    let seeds: Vec<u64> = cfg.seeds().collect();
    let mut reports = seeds
        .par_iter()
        .map(|seed| run_trial(cfg, *seed, WorldOptions::default()).map(|t| t.report))
        .collect::<Result<Vec<_>, _>>()?;
    reports.sort_by_key(|r| r.seed);
    let summary = SummaryStats::from_reports(&reports);
    Ok(Experiment { config: cfg.clone(), reports, summary })
}
