//! Agreement for f < (1/2 − ε)n in synchrony with expected constant rounds.
//!
//! Iteration 1 is Vote, Commit; every later iteration is Status, Propose,
//! Vote, Commit. Nodes carry the highest certificate they have seen, vote
//! for a proposal unless they know a strictly higher certificate for the
//! other bit, commit on a conflict-free quorum and output once a quorum of
//! same-iteration commits (or a valid Terminate) arrives.

use std::collections::HashMap;
use std::sync::Arc;

use super::{local_round, CertBook, CertRules, ProtocolParams, Tally};
use crate::message::{Certificate, Message, MineTag, Proposal, Rank};
use crate::net::{Delivery, NodeContext, NodeLogic, Verifier};
use crate::types::{Bit, NodeId, RoundIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Step {
    Status,
    Propose,
    Vote,
    Commit,
}

/// How a node came to output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub bit: Bit,
    /// Iteration of the commits behind the output.
    pub iteration: u32,
    /// Learned from someone else's Terminate rather than from commits.
    pub relayed: bool,
}

pub struct Sync12Node {
    params: ProtocolParams,
    rules: CertRules,
    id: NodeId,
    start: RoundIndex,
    input: Bit,
    iteration: u32,
    book: CertBook,
    votes: Tally,
    commits: Tally,
    proposals: HashMap<u32, Vec<Arc<Proposal>>>,
    decision: Option<Decision>,
}

/// Validation shared with the partially synchronous protocol.
pub(crate) fn valid_vote(
    rules: &CertRules,
    v: Verifier<'_>,
    leader: Option<NodeId>,
    sender: NodeId,
    iteration: u32,
    bit: Bit,
    proposal: Option<&Arc<Proposal>>,
    needs_proposal: bool,
) -> bool {
    if !v.verify(MineTag::vote(iteration, bit), sender) {
        return false;
    }
    match proposal {
        None => !needs_proposal,
        Some(p) => p.iteration == iteration && p.bit == bit && rules.check_proposal(p, v, leader),
    }
}

pub(crate) fn valid_terminate(
    v: Verifier<'_>,
    threshold: u32,
    sender: NodeId,
    bit: Bit,
    iteration: u32,
    committers: &[NodeId],
) -> bool {
    let mut distinct = committers.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    v.verify(MineTag::terminate(bit), sender)
        && distinct.len() >= threshold as usize
        && distinct.iter().all(|c| v.verify(MineTag::commit(iteration, bit), *c))
}

/// Picks the proposal to act on: highest certificate, then lowest proposer.
pub(crate) fn select(proposals: &[Arc<Proposal>]) -> Option<&Arc<Proposal>> {
    proposals.iter().min_by_key(|p| (std::cmp::Reverse(p.rank()), p.proposer))
}

impl Sync12Node {
    pub fn new(params: ProtocolParams, id: NodeId, input: Bit, start: RoundIndex) -> Self {
        Sync12Node {
            rules: params.cert_rules(),
            params,
            id,
            start,
            input,
            iteration: 1,
            book: CertBook::default(),
            votes: Tally::default(),
            commits: Tally::default(),
            proposals: HashMap::new(),
            decision: None,
        }
    }

    pub fn decision(&self) -> Option<&Decision> {
        self.decision.as_ref()
    }

    pub fn book(&self) -> &CertBook {
        &self.book
    }

    pub(crate) fn schedule(k: u32) -> (u32, Step) {
        match k {
            1 => (1, Step::Vote),
            2 => (1, Step::Commit),
            _ => {
                let steps = [Step::Status, Step::Propose, Step::Vote, Step::Commit];
                (2 + (k - 3) / 4, steps[((k - 3) % 4) as usize])
            }
        }
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

    /// Absorbs the inbox; returns a Terminate to act on, if any.
    fn absorb(&mut self, inbox: &[Delivery], v: Verifier<'_>) -> Option<(Bit, u32, Arc<[NodeId]>, bool)> {
        let need = self.params.cert_threshold() as usize;
        let term_need = self.params.terminate_threshold();
        let mut outcome = None;
        for d in inbox {
            match &*d.payload {
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
                    let needs = *iteration >= 2;
                    if valid_vote(&self.rules, v, leader, d.sender, *iteration, *bit, proposal.as_ref(), needs)
                        && self.votes.insert(*iteration, *bit, d.sender) == Some(need)
                    {
                        let signers = self.votes.senders(*iteration, *bit).to_vec();
                        let cert = Arc::new(Certificate::new(Rank::Iteration(*iteration), *bit, signers));
                        self.adopt(&cert, v);
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

    fn act(&mut self, r: u32, step: Step, ctx: &mut NodeContext<'_>) {
        match step {
            Step::Status => {
                let msg = match self.book.highest() {
                    Some(c) => Message::Status { iteration: r, bit: Some(c.bit), cert: Some(c.clone()) },
                    None => Message::Status { iteration: r, bit: None, cert: None },
                };
                ctx.conditional_multicast(msg);
            }
            Step::Propose => {
                if self.leader(r).is_some_and(|l| l != self.id) {
                    return;
                }
                let (bit, cert) = match self.book.highest() {
                    Some(c) => (c.bit, Some(c.clone())),
                    None => (self.input, None),
                };
                ctx.conditional_multicast(Message::Propose(Arc::new(Proposal::new(self.id, r, bit, cert))));
            }
            Step::Vote if r == 1 => {
                ctx.conditional_multicast(Message::Vote { iteration: 1, bit: self.input, proposal: None });
            }
            Step::Vote => {
                let Some(p) = self.proposals.get(&r).and_then(|ps| select(ps)).cloned() else { return };
                if !self.book.blocks(p.bit, p.rank()) {
                    ctx.conditional_multicast(Message::Vote { iteration: r, bit: p.bit, proposal: Some(p) });
                }
            }
            Step::Commit => {
                let need = self.params.cert_threshold() as usize;
                for bit in Bit::BOTH {
                    if self.votes.count(r, bit) >= need && self.votes.count(r, bit.opposite()) == 0 {
                        let signers = self.votes.senders(r, bit).to_vec();
                        let cert = self
                            .book
                            .best(bit)
                            .filter(|c| c.rank == Rank::Iteration(r))
                            .cloned()
                            .unwrap_or_else(|| Arc::new(Certificate::new(Rank::Iteration(r), bit, signers)));
                        ctx.conditional_multicast(Message::Commit { iteration: r, bit, cert });
                    }
                }
            }
        }
    }
}

impl NodeLogic for Sync12Node {
    fn on_round(&mut self, inbox: &[Delivery], ctx: &mut NodeContext<'_>) {
        if self.decision.is_some() {
            return;
        }
        if let Some((bit, iteration, committers, relayed)) = self.absorb(inbox, ctx.verifier()) {
            ctx.conditional_multicast(Message::Terminate { bit, iteration, committers });
            self.decision = Some(Decision { bit, iteration, relayed });
            return;
        }
        let (r, step) = Self::schedule(local_round(ctx.round(), self.start));
        self.iteration = r;
        self.act(r, step, ctx);
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
