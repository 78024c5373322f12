use std::any::Any;
use std::sync::Arc;

use crate::fmine::{Coin, FMine};
use crate::message::{Message, MineTag};
use crate::types::{Bit, NodeId, RoundIndex};

/// A message as seen by its recipient.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub envelope: u64,
    pub sender: NodeId,
    pub send_round: RoundIndex,
    pub payload: Arc<Message>,
}

/// Public eligibility checks. Exposes `verify` and nothing else.
#[derive(Clone, Copy)]
pub struct Verifier<'a>(&'a FMine);

impl<'a> Verifier<'a> {
    pub(crate) fn new(fmine: &'a FMine) -> Self {
        Verifier(fmine)
    }

    pub fn verify(&self, tag: MineTag, node: NodeId) -> bool {
        self.0.verify(tag, node)
    }
}

/// Attempt record kept by the world for attempt accounting.
pub(crate) type AttemptSink<'a> = &'a mut Vec<super::MiningAttempt>;

/// What a node's handler may do in one round. There is deliberately no way
/// to read the network's delay bound from here.
pub struct NodeContext<'a> {
    id: NodeId,
    round: RoundIndex,
    n: u32,
    honest: bool,
    fmine: &'a mut FMine,
    outbox: &'a mut Vec<Message>,
    attempts: AttemptSink<'a>,
}

impl<'a> NodeContext<'a> {
    pub(crate) fn new(
        id: NodeId,
        round: RoundIndex,
        n: u32,
        honest: bool,
        fmine: &'a mut FMine,
        outbox: &'a mut Vec<Message>,
        attempts: AttemptSink<'a>,
    ) -> Self {
        NodeContext { id, round, n, honest, fmine, outbox, attempts }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn round(&self) -> RoundIndex {
        self.round
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Mines eligibility for the node itself.
    pub fn mine(&mut self, tag: MineTag) -> Coin {
        let coin = self.fmine.mine(self.id, tag);
        self.attempts.push(super::MiningAttempt {
            round: self.round,
            node: self.id,
            tag,
            honest: self.honest,
            success: coin.success,
        });
        coin
    }

    pub fn verify(&self, tag: MineTag, node: NodeId) -> bool {
        self.fmine.verify(tag, node)
    }

    pub fn verifier(&self) -> Verifier<'_> {
        Verifier::new(self.fmine)
    }

    /// Sends to every node, including the sender.
    pub fn multicast(&mut self, msg: Message) {
        self.outbox.push(msg);
    }

    /// Mines the message's descriptor and multicasts only on success.
    /// Messages without a descriptor go out unconditionally.
    pub fn conditional_multicast(&mut self, msg: Message) -> bool {
        let eligible = match msg.tag() {
            Some(tag) => self.mine(tag).success,
            None => true,
        };
        if eligible {
            self.outbox.push(msg);
        }
        eligible
    }
}

/// A per-node protocol state machine driven by the world.
pub trait NodeLogic: Send + Any {
    fn on_round(&mut self, inbox: &[Delivery], ctx: &mut NodeContext<'_>);

    fn output(&self) -> Option<Bit>;

    /// A halted node is never activated again.
    fn is_halted(&self) -> bool;

    /// Current protocol iteration, 0 when not applicable.
    fn iteration(&self) -> u32 {
        0
    }

    fn as_any(&self) -> &dyn Any;
}
