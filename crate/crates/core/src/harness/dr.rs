//! Paired runs of the message-complexity attack against broadcast.
//!
//! For one seed the same configuration runs three times: under A (V corrupt
//! and deaf to its first ⌊f/2⌋ messages), under A′ (p honest, its first
//! ⌊f/2⌋ incoming messages removed after the fact) and under a passive
//! adversary for reference.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::runner::{build_world_with, HarnessError};
use crate::adversary::{DrA, DrAPrime, DrSetup, Passive};
use crate::net::{World, WorldOptions};
use crate::types::{Bit, NodeId, RoundIndex};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DrPair {
    pub seed: u64,
    pub sender_input: Bit,
    pub p: NodeId,
    /// Every node outside V that stayed honest in both runs saw the same
    /// inbox sequence.
    pub u_equal: bool,
    /// Under A′: p's output differs from U's or p never outputs.
    pub aprime_error: bool,
    /// The same event for p under a passive adversary.
    pub passive_error: bool,
    pub attack_failed: bool,
    pub blocked: u32,
    pub u_output: Option<Bit>,
    pub p_output: Option<Bit>,
}

pub fn dr_setup(cfg: &ExperimentConfig, seed: u64) -> DrSetup {
    DrSetup::new(cfg.n, cfg.f(), NodeId(cfg.bb_sender), seed)
}

fn run(cfg: &ExperimentConfig, seed: u64, adversary: Box<dyn crate::adversary::Adversary>) -> Result<World, HarnessError> {
    let options = WorldOptions { trace: false, inbox_digests: true };
    let (mut world, _) = build_world_with(cfg, seed, adversary, options)?;
    world.run().map_err(|source| HarnessError::Sim { seed, source })?;
    Ok(world)
}

/// Common output of the forever-honest nodes outside V, if they agree.
fn u_output(world: &World, setup: &DrSetup) -> Option<Bit> {
    let mut outs = (0..world.n())
        .map(NodeId)
        .filter(|id| !setup.in_v(*id) && world.ledger().forever_honest(*id))
        .map(|id| world.outputs()[id.index()].map(|(b, _)| b));
    let first = outs.next()??;
    outs.all(|o| o == Some(first)).then_some(first)
}

fn p_error(world: &World, setup: &DrSetup) -> (bool, Option<Bit>) {
    let p_out = world.outputs()[setup.p.index()].map(|(b, _)| b);
    (p_out.is_none() || p_out != u_output(world, setup), p_out)
}

/// Inbox digests of `id` up to the round it output (or the last round run).
fn inbox_history(world: &World, id: NodeId) -> (RoundIndex, Vec<(RoundIndex, u64)>) {
    let end = world.outputs()[id.index()].map_or(RoundIndex(world.rounds_executed()), |(_, r)| r);
    let digests = world.inbox_digests().expect("digests enabled")[id.index()]
        .iter()
        .filter(|(r, _)| *r <= end)
        .copied()
        .collect();
    (end, digests)
}

fn u_inboxes_equal(a: &World, b: &World, setup: &DrSetup) -> bool {
    (0..a.n()).map(NodeId).filter(|id| !setup.in_v(*id) && !b.ledger().is_corrupt(*id)).all(|id| {
        let (end_a, ha) = inbox_history(a, id);
        let (end_b, hb) = inbox_history(b, id);
        let both_output = a.outputs()[id.index()].is_some() && b.outputs()[id.index()].is_some();
        if both_output {
            end_a == end_b && ha == hb
        } else {
            let end = end_a.min(end_b);
            ha.iter().filter(|(r, _)| *r <= end).eq(hb.iter().filter(|(r, _)| *r <= end))
        }
    })
}

/// Runs A, A′ and the passive reference for one seed.
pub fn dr_pair(cfg: &ExperimentConfig, seed: u64) -> Result<DrPair, HarnessError> {
    let setup = dr_setup(cfg, seed);
    let a = run(cfg, seed, Box::new(DrA::new(setup.clone())))?;
    let a_prime = run(cfg, seed, Box::new(DrAPrime::new(setup.clone())))?;
    let passive = run(cfg, seed, Box::new(Passive))?;
    let (aprime_error, p_output) = p_error(&a_prime, &setup);
    let blocked = a_prime.adversary().as_any().downcast_ref::<DrAPrime>().map_or(0, |d| d.blocked());
    Ok(DrPair {
        seed,
        sender_input: cfg.sender_input,
        p: setup.p,
        u_equal: u_inboxes_equal(&a, &a_prime, &setup),
        aprime_error,
        passive_error: p_error(&passive, &setup).0,
        attack_failed: a_prime.adversary().attack_failed(),
        blocked,
        u_output: u_output(&a_prime, &setup),
        p_output,
    })
}
