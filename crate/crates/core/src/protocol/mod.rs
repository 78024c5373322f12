//! The agreement protocols and the broadcast front end.
//!
//! Every protocol is a per-node state machine implementing
//! [`NodeLogic`](crate::net::NodeLogic). In warmup mode all mining succeeds,
//! so a mined message is just a signed one and thresholds are stated in
//! nodes; in committee mode thresholds are stated in λ.

mod bb;
mod book;
mod psync13;
mod sync12;
mod sync13;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bb::BroadcastFrontEnd;
pub use book::{CertBook, CertRules, Tally};
pub use psync13::{PsyncNode, StepClock, StepKind, StepPosition};
pub use sync12::{Decision, Sync12Node};
pub use sync13::{Sync13Node, Sync13Record};

use crate::fmine::{DifficultyError, DifficultyMap, ProposeRate};
use crate::net::NodeLogic;
use crate::types::{Bit, NodeId, RoundIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Sync13,
    Sync12,
    Psync13,
}

impl ProtocolKind {
    /// Resilience bound: f < (bound − ε)·n.
    pub fn resilience(self) -> f64 {
        match self {
            ProtocolKind::Sync12 => 0.5,
            ProtocolKind::Sync13 | ProtocolKind::Psync13 => 1.0 / 3.0,
        }
    }

    pub fn propose_rate(self) -> ProposeRate {
        match self {
            ProtocolKind::Sync13 => ProposeRate::HalfOverN,
            ProtocolKind::Sync12 | ProtocolKind::Psync13 => ProposeRate::OneOverN,
        }
    }

    pub fn is_partially_synchronous(self) -> bool {
        self == ProtocolKind::Psync13
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Sync13 => "sync13",
            ProtocolKind::Sync12 => "sync12",
            ProtocolKind::Psync13 => "psync13",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync13" => Ok(ProtocolKind::Sync13),
            "sync12" => Ok(ProtocolKind::Sync12),
            "psync13" => Ok(ProtocolKind::Psync13),
            other => Err(ProtocolError::UnknownProtocol(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every node multicasts; a unique round-robin leader proposes.
    Warmup,
    /// Messages go out only on a successful mining attempt.
    Committee,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Warmup => "warmup",
            Mode::Committee => "committee",
        })
    }
}

impl FromStr for Mode {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warmup" => Ok(Mode::Warmup),
            "committee" => Ok(Mode::Committee),
            other => Err(ProtocolError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Difficulty(#[from] DifficultyError),
}

/// Parameters shared by all nodes of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    pub kind: ProtocolKind,
    pub mode: Mode,
    pub n: u32,
    pub f: u32,
    pub lambda: u32,
    /// Iteration count for sync13, doubling period for psync13; unused by
    /// sync12, which runs until termination.
    pub iterations: u32,
    pub seed: u64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.iterations == 0 && self.kind != ProtocolKind::Sync12 {
            return Err(ProtocolError::ZeroIterations);
        }
        self.difficulty().map(|_| ())
    }

    pub fn difficulty(&self) -> Result<DifficultyMap, ProtocolError> {
        Ok(match self.mode {
            Mode::Warmup => DifficultyMap::warmup(),
            Mode::Committee => DifficultyMap::committee(self.n, self.lambda, self.kind.propose_rate())?,
        })
    }

    pub fn is_warmup(&self) -> bool {
        self.mode == Mode::Warmup
    }

    /// Round-robin leader of an iteration in warmup mode.
    pub fn leader(&self, iteration: u32) -> NodeId {
        NodeId(iteration % self.n)
    }

    /// Quorum that makes a certificate (votes for one bit in one iteration).
    pub fn cert_threshold(&self) -> u32 {
        match (self.kind, self.mode) {
            (ProtocolKind::Sync13, Mode::Warmup) => ceil_frac(2 * self.n, 3),
            (ProtocolKind::Sync13, Mode::Committee) => ceil_frac(2 * self.lambda, 3),
            (ProtocolKind::Sync12, Mode::Warmup) => self.f + 1,
            (ProtocolKind::Sync12, Mode::Committee) => ceil_frac(self.lambda, 2),
            (ProtocolKind::Psync13, Mode::Warmup) => 2 * self.f + 1,
            (ProtocolKind::Psync13, Mode::Committee) => ceil_frac(2 * self.lambda, 3),
        }
    }

    /// Same-iteration Commits needed to output.
    pub fn terminate_threshold(&self) -> u32 {
        self.cert_threshold()
    }

    /// Input bits needed for an input certificate (psync13 only).
    pub fn input_threshold(&self) -> u32 {
        match self.mode {
            Mode::Warmup => self.f + 1,
            Mode::Committee => ceil_frac(self.lambda, 3),
        }
    }

    pub fn cert_rules(&self) -> CertRules {
        match self.kind {
            ProtocolKind::Sync13 => CertRules { bottom: true, input: None, normal: self.cert_threshold() },
            ProtocolKind::Sync12 => CertRules { bottom: true, input: None, normal: self.cert_threshold() },
            ProtocolKind::Psync13 => {
                CertRules { bottom: false, input: Some(self.input_threshold()), normal: self.cert_threshold() }
            }
        }
    }

    /// A fresh state machine for one node. `start` is the first round the
    /// protocol runs in (1 normally, 2 behind the broadcast front end).
    pub fn node(&self, id: NodeId, input: Bit, start: RoundIndex) -> Box<dyn NodeLogic> {
        match self.kind {
            ProtocolKind::Sync13 => Box::new(Sync13Node::new(*self, id, input, start)),
            ProtocolKind::Sync12 => Box::new(Sync12Node::new(*self, id, input, start)),
            ProtocolKind::Psync13 => Box::new(PsyncNode::new(*self, id, input, start)),
        }
    }
}

/// ⌈a / b⌉ for b > 0.
pub fn ceil_frac(a: u32, b: u32) -> u32 {
    a.div_ceil(b)
}

/// Local round number, 1-based, of `round` for a protocol started at `start`.
pub(crate) fn local_round(round: RoundIndex, start: RoundIndex) -> u32 {
    round.0 + 1 - start.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: ProtocolKind, mode: Mode, n: u32, f: u32, lambda: u32) -> ProtocolParams {
        ProtocolParams { kind, mode, n, f, lambda, iterations: 5, seed: 0 }
    }

    #[test]
    fn thresholds() {
        assert_eq!(params(ProtocolKind::Sync13, Mode::Warmup, 9, 2, 0).cert_threshold(), 6);
        assert_eq!(params(ProtocolKind::Sync13, Mode::Committee, 100, 30, 30).cert_threshold(), 20);
        assert_eq!(params(ProtocolKind::Sync12, Mode::Committee, 100, 30, 40).cert_threshold(), 20);
        assert_eq!(params(ProtocolKind::Sync12, Mode::Committee, 100, 30, 41).cert_threshold(), 21);
        assert_eq!(params(ProtocolKind::Sync12, Mode::Warmup, 10, 4, 0).cert_threshold(), 5);
        let p = params(ProtocolKind::Psync13, Mode::Committee, 300, 80, 30);
        assert_eq!((p.cert_threshold(), p.input_threshold(), p.terminate_threshold()), (20, 10, 20));
        let p = params(ProtocolKind::Psync13, Mode::Warmup, 10, 3, 0);
        assert_eq!((p.cert_threshold(), p.input_threshold()), (7, 4));
    }

    #[test]
    fn zero_iterations_rejected() {
        let mut p = params(ProtocolKind::Sync13, Mode::Warmup, 9, 2, 0);
        p.iterations = 0;
        assert_eq!(p.validate(), Err(ProtocolError::ZeroIterations));
        p.kind = ProtocolKind::Sync12;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn committee_needs_n_above_lambda() {
        let p = params(ProtocolKind::Sync12, Mode::Committee, 30, 10, 30);
        assert!(matches!(p.validate(), Err(ProtocolError::Difficulty(_))));
    }

    #[test]
    fn names_parse() {
        for k in [ProtocolKind::Sync13, ProtocolKind::Sync12, ProtocolKind::Psync13] {
            assert_eq!(k.to_string().parse::<ProtocolKind>().unwrap(), k);
        }
        assert!("sync".parse::<ProtocolKind>().is_err());
        assert_eq!("committee".parse::<Mode>().unwrap(), Mode::Committee);
    }
}
