//! Round-lockstep network simulator.
//!
//! Each round the world delivers due envelopes, runs every so-far-honest
//! node's handler in ascending id order, hands the adversary its turn
//! (corruption, injection, retraction) and finally asks it to schedule the
//! delay of every envelope created in the round.

mod ledger;
mod node;
mod trace;
mod world;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::CorruptionLedger;
pub use node::{Delivery, NodeContext, NodeLogic, Verifier};
pub use trace::{TraceEvent, TraceLog};
pub use world::{MiningAttempt, NetStats, Observed, RunStatus, SentRecord, World, WorldOptions};

use crate::message::Message;
use crate::types::{NodeId, RoundIndex};

/// Largest delay bound accepted in partial synchrony.
pub const MAX_DELTA: u32 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("round limit of {0} reached")]
    MaxRoundsExceeded(u32),
    #[error("corruption budget of {budget} exhausted")]
    BudgetExceeded { budget: u32 },
    #[error("node {0} is already corrupt")]
    AlreadyCorrupt(NodeId),
    #[error("node {0} is not corrupt")]
    NotCorrupt(NodeId),
    #[error("after-the-fact removal is disabled")]
    CapabilityDisabled,
    #[error("envelope {envelope} was sent in round {sent} but its sender was corrupted in round {corrupted:?}")]
    WrongRound { envelope: u64, sent: RoundIndex, corrupted: Option<RoundIndex> },
    #[error("caller does not own node {0}")]
    NotOwner(NodeId),
    #[error("envelope {0} is unknown or already delivered")]
    UnknownEnvelope(u64),
    #[error("delay {delay} outside [1, {delta}]")]
    InvalidDelay { delay: u32, delta: u32 },
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkMode {
    /// Every envelope arrives at the start of the next round.
    Sync,
    /// Every envelope arrives within `delta` rounds; the adversary picks when.
    PartialSync { delta: u32 },
}

impl NetworkMode {
    pub fn delta(&self) -> Option<u32> {
        match self {
            NetworkMode::Sync => None,
            NetworkMode::PartialSync { delta } => Some(*delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n: u32,
    pub f: u32,
    pub mode: NetworkMode,
    pub strongly_adaptive: bool,
    pub seed: u64,
    pub max_rounds: u32,
}

impl WorldConfig {
    /// Round cap of `50 * lambda * (delta or 1)`.
    pub fn default_max_rounds(lambda: u32, mode: NetworkMode) -> u32 {
        50 * lambda.max(1) * mode.delta().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::InvalidConfig(format!("n = {} but at least 2 nodes are needed", self.n)));
        }
        if self.f >= self.n {
            return Err(SimError::InvalidConfig(format!("f = {} must be below n = {}", self.f, self.n)));
        }
        if self.max_rounds == 0 {
            return Err(SimError::InvalidConfig("max_rounds must be positive".into()));
        }
        if let NetworkMode::PartialSync { delta } = self.mode {
            if delta == 0 || delta > MAX_DELTA {
                return Err(SimError::InvalidConfig(format!("delta = {delta} outside [1, {MAX_DELTA}]")));
            }
        }
        Ok(())
    }
}

/// An authenticated point-to-point copy of a message in flight.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub id: u64,
    pub sender: NodeId,
    pub recipient: NodeId,
    pub payload: Arc<Message>,
    pub send_round: RoundIndex,
    /// Assigned when the adversary schedules the round's envelopes.
    pub deliver_round: RoundIndex,
    pub retracted: bool,
}

/// Who is acting on the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Caller {
    Node(NodeId),
    Adversary,
}

#[cfg(test)]
mod tests;
