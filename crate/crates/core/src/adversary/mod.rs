//! Adversary strategies and the control surface they act through.
//!
//! An adversary acts after every honest handler of a round. Through
//! [`AdversaryControl`] it sees every message sent this round, the inboxes of
//! corrupt nodes and the corruption ledger; it can corrupt, mine and send for
//! corrupt nodes, run a corrupt node's original state machine as a puppet,
//! and, when the world allows it, retract same-round envelopes.

mod baseline;
mod bitflip;
mod dolev_reischuk;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{AdaptiveEager, DelayPolicy, MaxDelay, Passive, StaticSilence};
pub use bitflip::BitFlip;
pub use dolev_reischuk::{DrA, DrAPrime, DrSetup};

use crate::fmine::Coin;
use crate::message::{Message, MineTag};
use crate::net::{CorruptionLedger, Delivery, Envelope, SentRecord, SimError, World};
use crate::rng;
use crate::types::{NodeId, RoundIndex};

/// Powers a strategy needs beyond plain adaptive corruption.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Capabilities {
    /// After-the-fact removal of same-round messages.
    pub strongly_adaptive: bool,
}

pub trait Adversary: Send {
    fn name(&self) -> &'static str;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    /// Round 0, before any node runs.
    fn setup(&mut self, _ctl: &mut AdversaryControl<'_>) {}

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>);

    /// Delay for one envelope under partial synchrony, in `[1, delta]`.
    fn schedule_delay(&mut self, _envelope: &Envelope, delta: u32) -> u32 {
        delta
    }

    /// The attack could not be carried out as designed in this run.
    fn attack_failed(&self) -> bool {
        false
    }

    /// Per-strategy audit counters reported with each trial.
    fn counters(&self) -> Vec<(&'static str, u64)> {
        Vec::new()
    }

    fn as_any(&self) -> &dyn std::any::Any;
}

/// The adversary's handle on the world for the duration of its turn.
pub struct AdversaryControl<'w> {
    world: &'w mut World,
}

impl<'w> AdversaryControl<'w> {
    pub(crate) fn new(world: &'w mut World) -> Self {
        AdversaryControl { world }
    }

    pub fn round(&self) -> RoundIndex {
        self.world.round()
    }

    pub fn n(&self) -> u32 {
        self.world.n()
    }

    pub fn seed(&self) -> u64 {
        self.world.config().seed
    }

    /// The delay bound, visible to the adversary only.
    pub fn delta(&self) -> Option<u32> {
        self.world.config().mode.delta()
    }

    pub fn ledger(&self) -> &CorruptionLedger {
        self.world.ledger()
    }

    pub fn is_corrupt(&self, node: NodeId) -> bool {
        self.world.ledger().is_corrupt(node)
    }

    /// Everything multicast or injected so far this round.
    pub fn observed(&self) -> &[SentRecord] {
        self.world.observed_this_round()
    }

    /// Every send since the start of the run.
    pub fn history(&self) -> &[SentRecord] {
        self.world.sent_log()
    }

    /// This round's deliveries to a corrupt node.
    pub fn inbox(&self, node: NodeId) -> Result<Vec<Delivery>, SimError> {
        self.require_corrupt(node)?;
        Ok(self.world.inbox_of(node).to_vec())
    }

    pub fn corrupt(&mut self, target: NodeId) -> Result<(), SimError> {
        self.world.corrupt(target).map(|_| ())
    }

    pub fn mine(&mut self, node: NodeId, tag: MineTag) -> Result<Coin, SimError> {
        self.require_corrupt(node)?;
        Ok(self.world.adversary_mine(node, tag))
    }

    pub fn verify(&self, tag: MineTag, node: NodeId) -> bool {
        self.world.verify(tag, node)
    }

    pub fn multicast_as(&mut self, node: NodeId, msg: Message) -> Result<Range<u64>, SimError> {
        self.require_corrupt(node)?;
        Ok(self.world.send_to(node, (0..self.world.n()).map(NodeId).collect(), msg))
    }

    /// Point-to-point copies of `msg` to each listed recipient.
    pub fn send_as(&mut self, node: NodeId, recipients: Vec<NodeId>, msg: Message) -> Result<Range<u64>, SimError> {
        self.require_corrupt(node)?;
        Ok(self.world.send_to(node, recipients, msg))
    }

    pub fn retract(&mut self, envelope: u64) -> Result<(), SimError> {
        self.world.retract(envelope)
    }

    /// Runs a corrupt node's honest state machine on a chosen inbox and
    /// returns the messages it wants to multicast. Nothing is sent.
    pub fn puppet(&mut self, node: NodeId, inbox: &[Delivery]) -> Result<Vec<Message>, SimError> {
        self.require_corrupt(node)?;
        Ok(self.world.puppet(node, inbox))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        rng::adversary_stream(self.seed())
    }

    fn require_corrupt(&self, node: NodeId) -> Result<(), SimError> {
        if self.is_corrupt(node) {
            Ok(())
        } else {
            Err(SimError::NotOwner(node))
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown adversary strategy `{0}`")]
    Unknown(String),
    #[error("strategy {0} needs a broadcast sender")]
    NeedsSender(&'static str),
    #[error("strategy {strategy} needs f >= 2, got {f}")]
    BudgetTooSmall { strategy: &'static str, f: u32 },
    #[error("bad node list `{0}`")]
    BadNodeList(String),
}

/// Strategy selector used by configurations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Passive,
    StaticSilence(Vec<NodeId>),
    AdaptiveEager { equivocate: bool, delays: DelayPolicy },
    BitFlip,
    DrA,
    DrAPrime,
    MaxDelay(DelayPolicy),
}

/// What a strategy needs to know about the run it is built for.
#[derive(Clone, Copy, Debug)]
pub struct StrategyContext {
    pub n: u32,
    pub f: u32,
    pub seed: u64,
    pub bb_sender: Option<NodeId>,
}

impl Strategy {
    pub fn requires_strongly_adaptive(&self) -> bool {
        matches!(self, Strategy::DrAPrime)
    }

    pub fn build(&self, cx: StrategyContext) -> Result<Box<dyn Adversary>, AdversaryError> {
        Ok(match self {
            Strategy::Passive => Box::new(Passive),
            Strategy::StaticSilence(set) => Box::new(StaticSilence::new(set.clone())),
            Strategy::AdaptiveEager { equivocate, delays } => {
                Box::new(AdaptiveEager::new(*equivocate, *delays, cx.seed))
            }
            Strategy::BitFlip => Box::new(BitFlip::default()),
            Strategy::MaxDelay(policy) => Box::new(MaxDelay::new(*policy, cx.seed)),
            Strategy::DrA | Strategy::DrAPrime => {
                let name = if *self == Strategy::DrA { "dr-a" } else { "dr-aprime" };
                let sender = cx.bb_sender.ok_or(AdversaryError::NeedsSender(name))?;
                if cx.f < 2 {
                    return Err(AdversaryError::BudgetTooSmall { strategy: name, f: cx.f });
                }
                let setup = DrSetup::new(cx.n, cx.f, sender, cx.seed);
                if *self == Strategy::DrA {
                    Box::new(DrA::new(setup))
                } else {
                    Box::new(DrAPrime::new(setup))
                }
            }
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Passive => write!(f, "passive"),
            Strategy::StaticSilence(set) => {
                let ids: Vec<String> = set.iter().map(|n| n.to_string()).collect();
                write!(f, "static-silence:{}", ids.join(","))
            }
            Strategy::AdaptiveEager { equivocate, delays } => {
                write!(f, "adaptive-eager")?;
                if !equivocate {
                    write!(f, ":silent")?;
                }
                match delays {
                    DelayPolicy::Max => Ok(()),
                    other => write!(f, ":{other}"),
                }
            }
            Strategy::BitFlip => write!(f, "bitflip"),
            Strategy::DrA => write!(f, "dr-a"),
            Strategy::DrAPrime => write!(f, "dr-aprime"),
            Strategy::MaxDelay(DelayPolicy::Max) => write!(f, "max-delay"),
            Strategy::MaxDelay(policy) => write!(f, "max-delay:{policy}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let strategy = match head {
            "passive" => Strategy::Passive,
            "static-silence" => {
                let list = parts.next().unwrap_or_default();
                let ids = list
                    .split(',')
                    .filter(|p| !p.is_empty())
                    .map(|p| p.trim().parse::<u32>().map(NodeId))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| AdversaryError::BadNodeList(list.to_string()))?;
                return Ok(Strategy::StaticSilence(ids));
            }
            "adaptive-eager" => {
                let mut equivocate = true;
                let mut delays = DelayPolicy::Max;
                for p in parts.by_ref() {
                    match p {
                        "silent" => equivocate = false,
                        other => {
                            delays = other.parse().map_err(|_| AdversaryError::Unknown(s.to_string()))?
                        }
                    }
                }
                Strategy::AdaptiveEager { equivocate, delays }
            }
            "bitflip" => Strategy::BitFlip,
            "dr-a" => Strategy::DrA,
            "dr-aprime" => Strategy::DrAPrime,
            "max-delay" => match parts.next() {
                None => Strategy::MaxDelay(DelayPolicy::Max),
                Some(p) => Strategy::MaxDelay(p.parse().map_err(|_| AdversaryError::Unknown(s.to_string()))?),
            },
            _ => return Err(AdversaryError::Unknown(s.to_string())),
        };
        if parts.next().is_some() {
            return Err(AdversaryError::Unknown(s.to_string()));
        }
        Ok(strategy)
    }
}

impl TryFrom<String> for Strategy {
    type Error = AdversaryError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            "passive",
            "static-silence:1,4,9",
            "adaptive-eager",
            "adaptive-eager:silent",
            "adaptive-eager:uniform",
            "adaptive-eager:silent:status",
            "bitflip",
            "dr-a",
            "dr-aprime",
            "max-delay",
            "max-delay:status",
        ] {
            let parsed: Strategy = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert!("eager".parse::<Strategy>().is_err());
        assert!("static-silence:1,x".parse::<Strategy>().is_err());
    }

    #[test]
    fn dr_strategies_need_a_sender_and_budget() {
        let cx = StrategyContext { n: 10, f: 4, seed: 1, bb_sender: None };
        assert_eq!(Strategy::DrA.build(cx).err(), Some(AdversaryError::NeedsSender("dr-a")));
        let cx = StrategyContext { n: 10, f: 1, seed: 1, bb_sender: Some(NodeId(0)) };
        assert!(matches!(Strategy::DrAPrime.build(cx).err(), Some(AdversaryError::BudgetTooSmall { .. })));
    }
}
