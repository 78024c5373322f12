use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Adversary, AdversaryControl};
use crate::message::{Message, MineTag, MsgType, Proposal};
use crate::net::Envelope;
use crate::rng;
use crate::types::NodeId;

/// How a strategy chooses delays under partial synchrony.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DelayPolicy {
    /// Every envelope takes the full bound.
    #[default]
    Max,
    /// Uniform in `[1, delta]`, drawn from the adversary's stream.
    Uniform,
    /// Only messages of one kind are held back; everything else takes 1.
    Only(MsgType),
}

impl DelayPolicy {
    fn delay(&self, envelope: &Envelope, delta: u32, rng: &mut ChaCha8Rng) -> u32 {
        match self {
            DelayPolicy::Max => delta,
            DelayPolicy::Uniform => rng.gen_range(1..=delta),
            DelayPolicy::Only(kind) => match envelope.payload.tag() {
                Some(tag) if tag.kind == *kind => delta,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for DelayPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayPolicy::Max => write!(f, "max"),
            DelayPolicy::Uniform => write!(f, "uniform"),
            DelayPolicy::Only(kind) => write!(f, "{}", kind_name(*kind)),
        }
    }
}

impl FromStr for DelayPolicy {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "max" => DelayPolicy::Max,
            "uniform" => DelayPolicy::Uniform,
            "status" => DelayPolicy::Only(MsgType::Status),
            "propose" => DelayPolicy::Only(MsgType::Propose),
            "vote" => DelayPolicy::Only(MsgType::Vote),
            "commit" => DelayPolicy::Only(MsgType::Commit),
            "terminate" => DelayPolicy::Only(MsgType::Terminate),
            _ => return Err(()),
        })
    }
}

fn kind_name(kind: MsgType) -> &'static str {
    match kind {
        MsgType::Status => "status",
        MsgType::Propose => "propose",
        MsgType::Vote => "vote",
        MsgType::Commit => "commit",
        MsgType::Terminate => "terminate",
    }
}

/// Corrupts nobody and delivers as fast as allowed.
pub struct Passive;

impl Adversary for Passive {
    fn name(&self) -> &'static str {
        "passive"
    }

    fn on_round(&mut self, _ctl: &mut AdversaryControl<'_>) {}

    fn schedule_delay(&mut self, _envelope: &Envelope, _delta: u32) -> u32 {
        1
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Corrupts a fixed set before round 1; corrupt nodes stay silent.
pub struct StaticSilence {
    targets: Vec<NodeId>,
    skipped: u64,
}

impl StaticSilence {
    pub fn new(targets: Vec<NodeId>) -> Self {
        StaticSilence { targets, skipped: 0 }
    }
}

impl Adversary for StaticSilence {
    fn name(&self) -> &'static str {
        "static-silence"
    }

    fn setup(&mut self, ctl: &mut AdversaryControl<'_>) {
        for t in &self.targets {
            if ctl.corrupt(*t).is_err() {
                self.skipped += 1;
            }
        }
    }

    fn on_round(&mut self, _ctl: &mut AdversaryControl<'_>) {}

    fn schedule_delay(&mut self, _envelope: &Envelope, _delta: u32) -> u32 {
        1
    }

    fn counters(&self) -> Vec<(&'static str, u64)> {
        vec![("silence_skipped", self.skipped)]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Delays only; never corrupts.
pub struct MaxDelay {
    policy: DelayPolicy,
    rng: ChaCha8Rng,
}

impl MaxDelay {
    pub fn new(policy: DelayPolicy, seed: u64) -> Self {
        MaxDelay { policy, rng: rng::adversary_stream(seed) }
    }
}

impl Adversary for MaxDelay {
    fn name(&self) -> &'static str {
        "max-delay"
    }

    fn on_round(&mut self, _ctl: &mut AdversaryControl<'_>) {}

    fn schedule_delay(&mut self, envelope: &Envelope, delta: u32) -> u32 {
        self.policy.delay(envelope, delta, &mut self.rng)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Corrupts every node right after its first multicast until the budget is
/// spent. With `equivocate`, corrupt nodes that are eligible vote for the
/// opposite bit of every honest vote they see, reusing any public proposal
/// for that bit when the protocol wants one attached.
pub struct AdaptiveEager {
    equivocate: bool,
    delays: DelayPolicy,
    rng: ChaCha8Rng,
    done: BTreeSet<MineTag>,
    opposite_votes: u64,
}

impl AdaptiveEager {
    pub fn new(equivocate: bool, delays: DelayPolicy, seed: u64) -> Self {
        AdaptiveEager {
            equivocate,
            delays,
            rng: rng::adversary_stream(seed),
            done: BTreeSet::new(),
            opposite_votes: 0,
        }
    }

    fn find_proposal(ctl: &AdversaryControl<'_>, tag: MineTag) -> Option<Arc<Proposal>> {
        let bit = tag.bit?;
        ctl.history().iter().rev().find_map(|rec| match &*rec.payload {
            Message::Propose(p) if p.iteration == tag.iteration && p.bit == bit => Some(p.clone()),
            Message::Vote { iteration, bit: b, proposal: Some(p) } if *iteration == tag.iteration && *b == bit => {
                Some(p.clone())
            }
            _ => None,
        })
    }
}

impl Adversary for AdaptiveEager {
    fn name(&self) -> &'static str {
        "adaptive-eager"
    }

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>) {
        let mut speakers = Vec::new();
        let mut votes = Vec::new();
        for rec in ctl.observed().iter().filter(|r| r.honest) {
            speakers.push(rec.sender);
            if let Message::Vote { iteration, bit, proposal } = &*rec.payload {
                votes.push((MineTag::vote(*iteration, bit.opposite()), proposal.is_some()));
            }
        }
        for s in speakers {
            if ctl.ledger().remaining() == 0 {
                break;
            }
            if !ctl.is_corrupt(s) {
                let _ = ctl.corrupt(s);
            }
        }
        if !self.equivocate {
            return;
        }
        for (tag, needs_proposal) in votes {
            if !self.done.insert(tag) {
                continue;
            }
            let proposal = if needs_proposal {
                match Self::find_proposal(ctl, tag) {
                    Some(p) => Some(p),
                    None => continue,
                }
            } else {
                None
            };
            let bit = tag.bit.expect("votes carry a bit");
            let corrupt: Vec<NodeId> = ctl.ledger().iter().map(|(id, _)| id).collect();
            for c in corrupt {
                if ctl.mine(c, tag).is_ok_and(|coin| coin.success) {
                    let msg = Message::Vote { iteration: tag.iteration, bit, proposal: proposal.clone() };
                    if ctl.multicast_as(c, msg).is_ok() {
                        self.opposite_votes += 1;
                    }
                }
            }
        }
    }

    fn schedule_delay(&mut self, envelope: &Envelope, delta: u32) -> u32 {
        self.delays.delay(envelope, delta, &mut self.rng)
    }

    fn counters(&self) -> Vec<(&'static str, u64)> {
        vec![("opposite_votes", self.opposite_votes)]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
