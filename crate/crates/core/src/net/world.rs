use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;

use super::node::{Delivery, NodeContext, NodeLogic};
use super::trace::{TraceEvent, TraceLog};
use super::{Caller, CorruptionLedger, Envelope, NetworkMode, SimError, WorldConfig};
use crate::adversary::{Adversary, AdversaryControl};
use crate::fmine::{Coin, FMine};
use crate::message::{Message, MineTag};
use crate::types::{Bit, NodeId, RoundIndex};

/// One multicast or adversarial send, as publicly observed.
#[derive(Clone, Debug)]
pub struct SentRecord {
    pub round: RoundIndex,
    pub sender: NodeId,
    /// Sent by a so-far-honest node through its own handler.
    pub honest: bool,
    pub payload: Arc<Message>,
    pub first_envelope: u64,
    /// `None` means every node, in id order.
    pub recipients: Option<Arc<[NodeId]>>,
}

/// Alias used by adversary code for the current round's sends.
pub type Observed = SentRecord;

impl SentRecord {
    /// Envelope id of the copy addressed to `recipient`, if any.
    pub fn envelope_to(&self, recipient: NodeId) -> Option<u64> {
        match &self.recipients {
            None => Some(self.first_envelope + recipient.0 as u64),
            Some(list) => list
                .iter()
                .position(|r| *r == recipient)
                .map(|i| self.first_envelope + i as u64),
        }
    }

    pub fn reaches(&self, recipient: NodeId) -> bool {
        self.recipients.as_ref().is_none_or(|l| l.contains(&recipient))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MiningAttempt {
    pub round: RoundIndex,
    pub node: NodeId,
    pub tag: MineTag,
    /// Made by a so-far-honest node's own logic.
    pub honest: bool,
    pub success: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    /// Multicast calls by so-far-honest nodes, retracted or not.
    pub honest_multicasts: u64,
    /// Sends injected by the adversary for corrupt nodes.
    pub corrupt_sends: u64,
    pub retractions: u64,
    pub deliveries: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Every so-far-honest node halted.
    Finished,
    RoundLimit,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WorldOptions {
    pub trace: bool,
    pub inbox_digests: bool,
}

pub struct World {
    config: WorldConfig,
    round: RoundIndex,
    nodes: Vec<Box<dyn NodeLogic>>,
    fmine: FMine,
    ledger: CorruptionLedger,
    adversary: Option<Box<dyn Adversary>>,
    inboxes: Vec<Vec<Delivery>>,
    /// Envelopes created this round, awaiting scheduling.
    staged: Vec<Envelope>,
    pending: BTreeMap<u32, Vec<Envelope>>,
    next_envelope: u64,
    round_first_envelope: u64,
    sent: Vec<SentRecord>,
    round_first_sent: usize,
    attempts: Vec<MiningAttempt>,
    coin_cursor: usize,
    outputs: Vec<Option<(Bit, RoundIndex)>>,
    stats: NetStats,
    trace: Option<TraceLog>,
    digests: Option<Vec<Vec<(RoundIndex, u64)>>>,
}

impl World {
    pub fn new(
        config: WorldConfig,
        nodes: Vec<Box<dyn NodeLogic>>,
        fmine: FMine,
        adversary: Box<dyn Adversary>,
    ) -> Result<Self, SimError> {
        Self::with_options(config, nodes, fmine, adversary, WorldOptions::default())
    }

    pub fn with_options(
        config: WorldConfig,
        nodes: Vec<Box<dyn NodeLogic>>,
        fmine: FMine,
        adversary: Box<dyn Adversary>,
        options: WorldOptions,
    ) -> Result<Self, SimError> {
        config.validate()?;
        if nodes.len() != config.n as usize {
            return Err(SimError::InvalidConfig(format!(
                "{} node state machines for n = {}",
                nodes.len(),
                config.n
            )));
        }
        if adversary.capabilities().strongly_adaptive && !config.strongly_adaptive {
            return Err(SimError::CapabilityDisabled);
        }
        let n = config.n as usize;
        let mut world = World {
            ledger: CorruptionLedger::new(config.f),
            round: RoundIndex::SETUP,
            nodes,
            fmine,
            adversary: Some(adversary),
            inboxes: vec![Vec::new(); n],
            staged: Vec::new(),
            pending: BTreeMap::new(),
            next_envelope: 0,
            round_first_envelope: 0,
            sent: Vec::new(),
            round_first_sent: 0,
            attempts: Vec::new(),
            coin_cursor: 0,
            outputs: vec![None; n],
            stats: NetStats::default(),
            trace: options.trace.then(TraceLog::default),
            digests: options.inbox_digests.then(|| vec![Vec::new(); n]),
            config,
        };
        let mut adv = world.adversary.take().expect("adversary present");
        adv.setup(&mut AdversaryControl::new(&mut world));
        world.adversary = Some(adv);
        world.flush_coins();
        world.round = RoundIndex(1);
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    /// The next round to execute.
    pub fn round(&self) -> RoundIndex {
        self.round
    }

    pub fn rounds_executed(&self) -> u32 {
        self.round.0.saturating_sub(1)
    }

    pub fn n(&self) -> u32 {
        self.config.n
    }

    pub fn ledger(&self) -> &CorruptionLedger {
        &self.ledger
    }

    pub fn fmine(&self) -> &FMine {
        &self.fmine
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }

    pub fn node(&self, id: NodeId) -> &dyn NodeLogic {
        self.nodes[id.index()].as_ref()
    }

    pub fn outputs(&self) -> &[Option<(Bit, RoundIndex)>] {
        &self.outputs
    }

    pub fn sent_log(&self) -> &[SentRecord] {
        &self.sent
    }

    pub fn mining_attempts(&self) -> &[MiningAttempt] {
        &self.attempts
    }

    pub fn trace(&self) -> Option<&TraceLog> {
        self.trace.as_ref()
    }

    /// Per-node `(round, digest)` of every non-empty inbox, when enabled.
    pub fn inbox_digests(&self) -> Option<&[Vec<(RoundIndex, u64)>]> {
        self.digests.as_deref()
    }

    pub fn adversary(&self) -> &dyn Adversary {
        self.adversary.as_deref().expect("adversary present between rounds")
    }

    pub fn all_honest_halted(&self) -> bool {
        (0..self.config.n)
            .map(NodeId)
            .all(|id| self.ledger.is_corrupt(id) || self.nodes[id.index()].is_halted())
    }

    /// Steps until every so-far-honest node halted or the round cap is hit.
    pub fn run(&mut self) -> Result<RunStatus, SimError> {
        loop {
            if self.all_honest_halted() {
                return Ok(RunStatus::Finished);
            }
            match self.step_round() {
                Ok(_) => {}
                Err(SimError::MaxRoundsExceeded(_)) => return Ok(RunStatus::RoundLimit),
                Err(e) => return Err(e),
            }
        }
    }

    pub fn step_round(&mut self) -> Result<RoundIndex, SimError> {
        if self.round.0 > self.config.max_rounds {
            return Err(SimError::MaxRoundsExceeded(self.config.max_rounds));
        }
        let r = self.round;
        self.round_first_envelope = self.next_envelope;
        self.round_first_sent = self.sent.len();
        self.deliver(r);
        self.run_honest(r);

        let mut adv = self.adversary.take().expect("adversary present");
        adv.on_round(&mut AdversaryControl::new(self));
        self.flush_coins();
        let scheduled = self.schedule(r, adv.as_mut());
        self.adversary = Some(adv);
        scheduled?;

        for inbox in &mut self.inboxes {
            inbox.clear();
        }
        self.round = r.next();
        Ok(r)
    }

    /// Multicast on behalf of `sender`. Honest logic may only speak for its
    /// own node; the adversary only for nodes it has corrupted.
    pub fn multicast(&mut self, caller: Caller, sender: NodeId, payload: Message) -> Result<Range<u64>, SimError> {
        self.check_owner(caller, sender)?;
        let honest = matches!(caller, Caller::Node(_));
        Ok(self.dispatch(sender, None, payload, honest))
    }

    pub fn corrupt(&mut self, target: NodeId) -> Result<&CorruptionLedger, SimError> {
        if target.0 >= self.config.n {
            return Err(SimError::InvalidConfig(format!("no node {target}")));
        }
        self.ledger.record(target, self.round)?;
        let round = self.round;
        self.emit(|| TraceEvent::Corrupt { round, node: target });
        Ok(&self.ledger)
    }

    /// After-the-fact removal of an undelivered envelope whose sender was
    /// corrupted in the round it was sent.
    pub fn retract(&mut self, envelope: u64) -> Result<(), SimError> {
        if !self.config.strongly_adaptive {
            return Err(SimError::CapabilityDisabled);
        }
        let ledger = &self.ledger;
        let env = if envelope >= self.round_first_envelope && envelope < self.next_envelope {
            self.staged.get_mut((envelope - self.round_first_envelope) as usize)
        } else {
            self.pending.values_mut().find_map(|bucket| {
                bucket.binary_search_by_key(&envelope, |e| e.id).ok().map(move |i| &mut bucket[i])
            })
        }
        .ok_or(SimError::UnknownEnvelope(envelope))?;
        let corrupted = ledger.corrupted_at(env.sender);
        if corrupted != Some(env.send_round) {
            return Err(SimError::WrongRound { envelope, sent: env.send_round, corrupted });
        }
        if !env.retracted {
            env.retracted = true;
            self.stats.retractions += 1;
            let round = self.round;
            self.emit(|| TraceEvent::Retract { round, envelope });
        }
        Ok(())
    }

    pub(crate) fn check_owner(&self, caller: Caller, sender: NodeId) -> Result<(), SimError> {
        let ok = match caller {
            Caller::Node(id) => id == sender && !self.ledger.is_corrupt(id),
            Caller::Adversary => self.ledger.is_corrupt(sender),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::NotOwner(sender))
        }
    }

    pub(crate) fn observed_this_round(&self) -> &[SentRecord] {
        &self.sent[self.round_first_sent..]
    }

    pub(crate) fn inbox_of(&self, id: NodeId) -> &[Delivery] {
        &self.inboxes[id.index()]
    }

    pub(crate) fn verify(&self, tag: MineTag, node: NodeId) -> bool {
        self.fmine.verify(tag, node)
    }

    pub(crate) fn adversary_mine(&mut self, node: NodeId, tag: MineTag) -> Coin {
        let coin = self.fmine.mine(node, tag);
        self.attempts.push(MiningAttempt { round: self.round, node, tag, honest: false, success: coin.success });
        coin
    }

    /// Runs a corrupt node's own state machine on `inbox` and returns what it
    /// would multicast, without sending anything.
    pub(crate) fn puppet(&mut self, id: NodeId, inbox: &[Delivery]) -> Vec<Message> {
        let mut outbox = Vec::new();
        let node = &mut self.nodes[id.index()];
        if !node.is_halted() {
            let mut ctx = NodeContext::new(
                id,
                self.round,
                self.config.n,
                false,
                &mut self.fmine,
                &mut outbox,
                &mut self.attempts,
            );
            node.on_round(inbox, &mut ctx);
        }
        outbox
    }

    pub(crate) fn send_to(&mut self, sender: NodeId, recipients: Vec<NodeId>, payload: Message) -> Range<u64> {
        self.dispatch(sender, Some(recipients.into()), payload, false)
    }

    fn dispatch(
        &mut self,
        sender: NodeId,
        recipients: Option<Arc<[NodeId]>>,
        payload: Message,
        honest: bool,
    ) -> Range<u64> {
        let round = self.round;
        let payload = Arc::new(payload);
        let first = self.next_envelope;
        let push = |recipient: NodeId, staged: &mut Vec<Envelope>, next: &mut u64| {
            staged.push(Envelope {
                id: *next,
                sender,
                recipient,
                payload: payload.clone(),
                send_round: round,
                deliver_round: round,
                retracted: false,
            });
            *next += 1;
        };
        match &recipients {
            None => {
                for i in 0..self.config.n {
                    push(NodeId(i), &mut self.staged, &mut self.next_envelope);
                }
            }
            Some(list) => {
                for r in list.iter() {
                    push(*r, &mut self.staged, &mut self.next_envelope);
                }
            }
        }
        if honest {
            self.stats.honest_multicasts += 1;
        } else {
            self.stats.corrupt_sends += 1;
        }
        let count = self.next_envelope - first;
        if self.trace.is_some() {
            let message = payload.summary();
            self.emit(|| TraceEvent::Multicast {
                round,
                sender,
                honest,
                message,
                recipients: count as usize,
                first_envelope: first,
            });
        }
        self.sent.push(SentRecord { round, sender, honest, payload, first_envelope: first, recipients });
        first..self.next_envelope
    }

    fn deliver(&mut self, r: RoundIndex) {
        let Some(bucket) = self.pending.remove(&r.0) else { return };
        for env in bucket {
            if env.retracted {
                continue;
            }
            self.stats.deliveries += 1;
            if let Some(t) = self.trace.as_mut() {
                t.push(TraceEvent::Deliver { round: r, envelope: env.id, recipient: env.recipient });
            }
            self.inboxes[env.recipient.index()].push(Delivery {
                envelope: env.id,
                sender: env.sender,
                send_round: env.send_round,
                payload: env.payload,
            });
        }
        for (i, inbox) in self.inboxes.iter_mut().enumerate() {
            inbox.sort_by_key(|d| (d.send_round, d.sender));
            if let Some(digests) = self.digests.as_mut() {
                if !inbox.is_empty() {
                    let mut h = DefaultHasher::new();
                    for d in inbox.iter() {
                        (d.send_round, d.sender, &*d.payload).hash(&mut h);
                    }
                    digests[i].push((r, h.finish()));
                }
            }
        }
    }

    fn run_honest(&mut self, r: RoundIndex) {
        let mut outbox = Vec::new();
        for i in 0..self.config.n {
            let id = NodeId(i);
            if self.ledger.is_corrupt(id) || self.nodes[id.index()].is_halted() {
                continue;
            }
            let inbox = std::mem::take(&mut self.inboxes[id.index()]);
            {
                let mut ctx = NodeContext::new(
                    id,
                    r,
                    self.config.n,
                    true,
                    &mut self.fmine,
                    &mut outbox,
                    &mut self.attempts,
                );
                self.nodes[id.index()].on_round(&inbox, &mut ctx);
            }
            self.inboxes[id.index()] = inbox;
            self.flush_coins();
            for msg in outbox.drain(..) {
                self.dispatch(id, None, msg, true);
            }
            if self.outputs[id.index()].is_none() {
                if let Some(bit) = self.nodes[id.index()].output() {
                    self.outputs[id.index()] = Some((bit, r));
                    self.emit(|| TraceEvent::Output { round: r, node: id, bit });
                }
            }
        }
    }

    fn schedule(&mut self, r: RoundIndex, adv: &mut dyn Adversary) -> Result<(), SimError> {
        let staged = std::mem::take(&mut self.staged);
        for mut env in staged {
            if env.retracted {
                continue;
            }
            let delay = match self.config.mode {
                NetworkMode::Sync => 1,
                NetworkMode::PartialSync { delta } => {
                    let d = adv.schedule_delay(&env, delta);
                    if d == 0 || d > delta {
                        return Err(SimError::InvalidDelay { delay: d, delta });
                    }
                    d
                }
            };
            env.deliver_round = r.plus(delay);
            if let Some(t) = self.trace.as_mut() {
                t.push(TraceEvent::Send {
                    round: r,
                    envelope: env.id,
                    sender: env.sender,
                    recipient: env.recipient,
                    deliver_round: env.deliver_round,
                });
            }
            self.pending.entry(env.deliver_round.0).or_default().push(env);
        }
        Ok(())
    }

    fn flush_coins(&mut self) {
        let flips = self.fmine.flips();
        if let Some(t) = self.trace.as_mut() {
            for f in &flips[self.coin_cursor..] {
                t.push(TraceEvent::Coin { round: self.round, node: f.node, tag: f.tag, success: f.success });
            }
        }
        self.coin_cursor = flips.len();
    }

    fn emit(&mut self, event: impl FnOnce() -> TraceEvent) {
        if let Some(t) = self.trace.as_mut() {
            t.push(event());
        }
    }
}
