//! Phase-king agreement for f < (1/3 − ε)n in synchrony.
//!
//! Each of R iterations has a Propose round and a Vote round. A node keeps a
//! belief `b` and a sticky flag `F`; it follows a proposal only when `F = 0`,
//! and sets `F = 1` again when it sees a vote quorum for one bit.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{local_round, CertRules, ProtocolParams, Tally};
use crate::message::{Message, MineTag, Proposal};
use crate::net::{Delivery, NodeContext, NodeLogic};
use crate::rng;
use crate::types::{Bit, NodeId, RoundIndex};

/// One iteration as seen by one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sync13Record {
    pub iteration: u32,
    /// The bit the node voted for (whether or not it was eligible to send).
    pub b_star: Bit,
    /// Belief and sticky flag after counting this iteration's votes; `None`
    /// for the last iteration, whose votes are never counted.
    pub after: Option<(Bit, bool)>,
}

pub struct Sync13Node {
    params: ProtocolParams,
    rules: CertRules,
    id: NodeId,
    start: RoundIndex,
    b: Bit,
    sticky: bool,
    rng: ChaCha8Rng,
    votes: Tally,
    proposals: HashMap<u32, [bool; 2]>,
    records: Vec<Sync13Record>,
    output: Option<Bit>,
}

impl Sync13Node {
    pub fn new(params: ProtocolParams, id: NodeId, input: Bit, start: RoundIndex) -> Self {
        Sync13Node {
            rules: params.cert_rules(),
            rng: rng::node_stream(params.seed, id.0),
            params,
            id,
            start,
            b: input,
            sticky: true,
            votes: Tally::default(),
            proposals: HashMap::new(),
            records: Vec::new(),
            output: None,
        }
    }

    pub fn belief(&self) -> (Bit, bool) {
        (self.b, self.sticky)
    }

    pub fn records(&self) -> &[Sync13Record] {
        &self.records
    }

    fn absorb(&mut self, inbox: &[Delivery], ctx: &NodeContext<'_>) {
        let leader = |r| self.params.is_warmup().then(|| self.params.leader(r));
        for d in inbox {
            match &*d.payload {
                Message::Propose(p) => {
                    if d.sender == p.proposer && self.rules.check_proposal(p, ctx.verifier(), leader(p.iteration)) {
                        self.proposals.entry(p.iteration).or_default()[p.bit.as_index()] = true;
                    }
                }
                Message::Vote { iteration, bit, .. } => {
                    if ctx.verify(MineTag::vote(*iteration, *bit), d.sender) {
                        self.votes.insert(*iteration, *bit, d.sender);
                    }
                }
                _ => {}
            }
        }
    }

    /// Counts iteration `r`'s votes into the belief and sticky flag.
    fn settle(&mut self, r: u32) {
        let need = self.params.cert_threshold() as usize;
        let zero = self.votes.count(r, Bit::Zero);
        let one = self.votes.count(r, Bit::One);
        let winner = match (zero >= need, one >= need) {
            (true, true) => Some(if one > zero { Bit::One } else { Bit::Zero }),
            (true, false) => Some(Bit::Zero),
            (false, true) => Some(Bit::One),
            (false, false) => None,
        };
        match winner {
            Some(bit) => {
                self.b = bit;
                self.sticky = true;
            }
            None => self.sticky = false,
        }
        if let Some(rec) = self.records.iter_mut().rev().find(|rec| rec.iteration == r) {
            rec.after = Some((self.b, self.sticky));
        }
    }

    fn propose(&mut self, r: u32, ctx: &mut NodeContext<'_>) {
        if self.params.is_warmup() && self.params.leader(r) != self.id {
            return;
        }
        let bit = Bit::from_bool(self.rng.gen());
        ctx.conditional_multicast(Message::Propose(Arc::new(Proposal::new(self.id, r, bit, None))));
    }

    fn vote(&mut self, r: u32, ctx: &mut NodeContext<'_>) {
        let heard = self.proposals.get(&r).copied().unwrap_or_default();
        let b_star = if self.sticky {
            self.b
        } else {
            match heard {
                [true, _] => Bit::Zero,
                [false, true] => Bit::One,
                [false, false] => self.b,
            }
        };
        ctx.conditional_multicast(Message::Vote { iteration: r, bit: b_star, proposal: None });
        self.records.push(Sync13Record { iteration: r, b_star, after: None });
        if r == self.params.iterations {
            self.output = Some(b_star);
        }
    }
}

impl NodeLogic for Sync13Node {
    fn on_round(&mut self, inbox: &[Delivery], ctx: &mut NodeContext<'_>) {
        if self.output.is_some() {
            return;
        }
        self.absorb(inbox, ctx);
        let k = local_round(ctx.round(), self.start);
        let r = k.div_ceil(2);
        if k % 2 == 1 {
            if r > 1 {
                self.settle(r - 1);
            }
            self.propose(r, ctx);
        } else {
            self.vote(r, ctx);
        }
    }

    fn output(&self) -> Option<Bit> {
        self.output
    }

    fn is_halted(&self) -> bool {
        self.output.is_some()
    }

    fn iteration(&self) -> u32 {
        self.records.last().map_or(0, |r| r.iteration)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
