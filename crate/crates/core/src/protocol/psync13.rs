//! Agreement for f < (1/3 − ε)n under partial synchrony with unknown Δ.
//!
//! Iterations have four steps (Status, Propose, Vote, Commit). Steps are
//! counted in local rounds and double in length every R iterations, so once
//! a step outlasts Δ the protocol behaves as in synchrony. The lowest-ranked
//! certificate is an input certificate assembled from signed input bits.

use std::collections::HashMap;
use std::sync::Arc;

use super::sync12::{select, valid_terminate, valid_vote, Decision};
use super::{local_round, CertBook, CertRules, ProtocolParams, Tally};
use crate::message::{Certificate, Message, MineTag, Proposal, Rank};
use crate::net::{Delivery, NodeContext, NodeLogic, Verifier};
use crate::types::{Bit, NodeId, RoundIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    Status,
    Propose,
    Vote,
    Commit,
}

/// Where a local round falls in the iteration structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepPosition {
    pub iteration: u32,
    pub step: StepKind,
    pub step_length: u32,
    /// Rounds elapsed since the step began.
    pub offset: u32,
}

/// Pure function from local round to (iteration, step).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepClock {
    period: u32,
}

const MAX_DOUBLINGS: u32 = 30;

impl StepClock {
    pub fn new(period: u32) -> Self {
        assert!(period > 0, "doubling period must be positive");
        StepClock { period }
    }

    pub fn step_length(&self, iteration: u32) -> u32 {
        1 << ((iteration.max(1) - 1) / self.period).min(MAX_DOUBLINGS)
    }

    /// First local round (1-based) of an iteration.
    pub fn iteration_start(&self, iteration: u32) -> u64 {
        let mut start = 1u64;
        let mut r = 1;
        while r < iteration {
            let epoch_end = ((r - 1) / self.period + 1) * self.period;
            let upto = epoch_end.min(iteration - 1);
            start += (upto - r + 1) as u64 * 4 * self.step_length(r) as u64;
            r = upto + 1;
        }
        start
    }

    pub fn locate(&self, local_round: u32) -> StepPosition {
        let k = local_round as u64;
        let mut iteration = 1u32;
        let mut start = 1u64;
        loop {
            let len = self.step_length(iteration) as u64;
            let epoch_left = (self.period - (iteration - 1) % self.period) as u64;
            let epoch_rounds = epoch_left * 4 * len;
            if k < start + epoch_rounds {
                let into = k - start;
                let it = iteration + (into / (4 * len)) as u32;
                let within = into % (4 * len);
                let steps = [StepKind::Status, StepKind::Propose, StepKind::Vote, StepKind::Commit];
                return StepPosition {
                    iteration: it,
                    step: steps[(within / len) as usize],
                    step_length: len as u32,
                    offset: (within % len) as u32,
                };
            }
            start += epoch_rounds;
            iteration += epoch_left as u32;
        }
    }
}

pub struct PsyncNode {
    params: ProtocolParams,
    rules: CertRules,
    clock: StepClock,
    id: NodeId,
    start: RoundIndex,
    input: Bit,
    iteration: u32,
    book: CertBook,
    inputs: Tally,
    votes: Tally,
    commits: Tally,
    proposals: HashMap<u32, Vec<Arc<Proposal>>>,
    decision: Option<Decision>,
    /// (iteration, global round it began, step length) as this node saw it.
    starts: Vec<(u32, RoundIndex, u32)>,
}

impl PsyncNode {
    pub fn new(params: ProtocolParams, id: NodeId, input: Bit, start: RoundIndex) -> Self {
        PsyncNode {
            rules: params.cert_rules(),
            clock: StepClock::new(params.iterations),
            params,
            id,
            start,
            input,
            iteration: 0,
            book: CertBook::default(),
            inputs: Tally::default(),
            votes: Tally::default(),
            commits: Tally::default(),
            proposals: HashMap::new(),
            decision: None,
            starts: Vec::new(),
        }
    }

    pub fn decision(&self) -> Option<&Decision> {
        self.decision.as_ref()
    }

    pub fn book(&self) -> &CertBook {
        &self.book
    }

    pub fn iteration_starts(&self) -> &[(u32, RoundIndex, u32)] {
        &self.starts
    }

    fn leader(&self, iteration: u32) -> Option<NodeId> {
        self.params.is_warmup().then(|| self.params.leader(iteration))
    }

    fn adopt(&mut self, cert: &Arc<Certificate>, v: Verifier<'_>) -> bool {
        if self.rules.check_cert(cert, v) {
            self.book.offer(cert);
            true
        } else {
            false
        }
    }

    fn absorb(&mut self, inbox: &[Delivery], v: Verifier<'_>) -> Option<(Bit, u32, Arc<[NodeId]>, bool)> {
        let need = self.params.cert_threshold() as usize;
        let input_need = self.params.input_threshold() as usize;
        let term_need = self.params.terminate_threshold();
        let mut outcome = None;
        for d in inbox {
            match &*d.payload {
                Message::Status { iteration: 1, bit: Some(b), .. } => {
                    if v.verify(MineTag::status(1, Some(*b)), d.sender)
                        && self.inputs.insert(1, *b, d.sender) == Some(input_need)
                    {
                        let signers = self.inputs.senders(1, *b).to_vec();
                        self.adopt(&Arc::new(Certificate::new(Rank::Input, *b, signers)), v);
                    }
                }
                Message::Status { iteration, bit, cert } => {
                    if v.verify(MineTag::status(*iteration, *bit), d.sender) {
                        if let Some(c) = cert.as_ref().filter(|c| Some(c.bit) == *bit) {
                            self.adopt(c, v);
                        }
                    }
                }
                Message::Propose(p) => {
                    if d.sender == p.proposer && self.rules.check_proposal(p, v, self.leader(p.iteration)) {
                        if let Some(c) = &p.cert {
                            self.book.offer(c);
                        }
                        let list = self.proposals.entry(p.iteration).or_default();
                        if !list.contains(p) {
                            list.push(p.clone());
                        }
                    }
                }
                Message::Vote { iteration, bit, proposal } => {
                    let leader = self.leader(*iteration);
                    if valid_vote(&self.rules, v, leader, d.sender, *iteration, *bit, proposal.as_ref(), true) {
                        if let Some(c) = proposal.as_ref().and_then(|p| p.cert.as_ref()) {
                            self.book.offer(c);
                        }
                        if self.votes.insert(*iteration, *bit, d.sender) == Some(need) {
                            let signers = self.votes.senders(*iteration, *bit).to_vec();
                            let cert = Arc::new(Certificate::new(Rank::Iteration(*iteration), *bit, signers));
                            self.adopt(&cert, v);
                        }
                    }
                }
                Message::Commit { iteration, bit, cert } => {
                    let ok = v.verify(MineTag::commit(*iteration, *bit), d.sender)
                        && cert.rank == Rank::Iteration(*iteration)
                        && cert.bit == *bit
                        && self.adopt(cert, v);
                    if ok
                        && self.commits.insert(*iteration, *bit, d.sender) == Some(term_need as usize)
                        && outcome.is_none()
                    {
                        let committers: Arc<[NodeId]> = self.commits.senders(*iteration, *bit).into();
                        outcome = Some((*bit, *iteration, committers, false));
                    }
                }
                Message::Terminate { bit, iteration, committers } => {
                    if outcome.is_none() && valid_terminate(v, term_need, d.sender, *bit, *iteration, committers) {
                        outcome = Some((*bit, *iteration, committers.clone(), true));
                    }
                }
                Message::BroadcastInput(_) => {}
            }
        }
        outcome
    }

    fn act(&mut self, r: u32, step: StepKind, ctx: &mut NodeContext<'_>) {
        match step {
            StepKind::Status if r == 1 => {
                ctx.conditional_multicast(Message::Status { iteration: 1, bit: Some(self.input), cert: None });
            }
            StepKind::Status => {
                let msg = match self.book.highest() {
                    Some(c) => Message::Status { iteration: r, bit: Some(c.bit), cert: Some(c.clone()) },
                    None => Message::Status { iteration: r, bit: None, cert: None },
                };
                ctx.conditional_multicast(msg);
            }
            StepKind::Propose => {
                if self.leader(r).is_some_and(|l| l != self.id) {
                    return;
                }
                let Some(c) = self.book.highest().cloned() else { return };
                ctx.conditional_multicast(Message::Propose(Arc::new(Proposal::new(self.id, r, c.bit, Some(c)))));
            }
            StepKind::Vote => {
                let Some(p) = self.proposals.get(&r).and_then(|ps| select(ps)).cloned() else { return };
                if !self.book.blocks(p.bit, p.rank()) {
                    ctx.conditional_multicast(Message::Vote { iteration: r, bit: p.bit, proposal: Some(p) });
                }
            }
            StepKind::Commit => {
                let need = self.params.cert_threshold() as usize;
                for bit in Bit::BOTH {
                    if self.votes.count(r, bit) >= need {
                        let signers = self.votes.senders(r, bit).to_vec();
                        let cert = match self.book.best(bit) {
                            Some(c) if c.rank == Rank::Iteration(r) => c.clone(),
                            _ => Arc::new(Certificate::new(Rank::Iteration(r), bit, signers)),
                        };
                        ctx.conditional_multicast(Message::Commit { iteration: r, bit, cert });
                    }
                }
            }
        }
    }
}

impl NodeLogic for PsyncNode {
    fn on_round(&mut self, inbox: &[Delivery], ctx: &mut NodeContext<'_>) {
        if self.decision.is_some() {
            return;
        }
        if let Some((bit, iteration, committers, relayed)) = self.absorb(inbox, ctx.verifier()) {
            ctx.conditional_multicast(Message::Terminate { bit, iteration, committers });
            self.decision = Some(Decision { bit, iteration, relayed });
            return;
        }
        let pos = self.clock.locate(local_round(ctx.round(), self.start));
        if pos.iteration != self.iteration {
            self.iteration = pos.iteration;
            self.starts.push((pos.iteration, ctx.round(), pos.step_length));
        }
        if pos.offset == 0 {
            self.act(pos.iteration, pos.step, ctx);
        }
    }

    fn output(&self) -> Option<Bit> {
        self.decision.as_ref().map(|d| d.bit)
    }

    fn is_halted(&self) -> bool {
        self.decision.is_some()
    }

    fn iteration(&self) -> u32 {
        self.iteration
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
