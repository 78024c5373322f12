//! Protocol messages, mining descriptors and certificates.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::types::{Bit, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsgType {
    Status,
    Propose,
    Vote,
    Commit,
    Terminate,
}

impl MsgType {
    fn code(self) -> u8 {
        match self {
            MsgType::Status => 1,
            MsgType::Propose => 2,
            MsgType::Vote => 3,
            MsgType::Commit => 4,
            MsgType::Terminate => 5,
        }
    }
}

/// The `(type, iteration, bit)` descriptor a node mines eligibility for.
///
/// `Terminate` carries iteration 0. A `Status` may carry no bit at all when
/// the sender has not seen any certificate yet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MineTag {
    pub kind: MsgType,
    pub iteration: u32,
    pub bit: Option<Bit>,
}

impl MineTag {
    pub fn status(iteration: u32, bit: Option<Bit>) -> Self {
        MineTag { kind: MsgType::Status, iteration, bit }
    }

    pub fn propose(iteration: u32, bit: Bit) -> Self {
        MineTag { kind: MsgType::Propose, iteration, bit: Some(bit) }
    }

    pub fn vote(iteration: u32, bit: Bit) -> Self {
        MineTag { kind: MsgType::Vote, iteration, bit: Some(bit) }
    }

    pub fn commit(iteration: u32, bit: Bit) -> Self {
        MineTag { kind: MsgType::Commit, iteration, bit: Some(bit) }
    }

    pub fn terminate(bit: Bit) -> Self {
        MineTag { kind: MsgType::Terminate, iteration: 0, bit: Some(bit) }
    }

    /// The same descriptor with the bit erased.
    pub fn without_bit(self) -> Self {
        MineTag { bit: None, ..self }
    }

    /// Fixed-width encoding used to key randomness.
    pub fn encode(&self) -> [u8; 6] {
        let it = self.iteration.to_le_bytes();
        let bit = match self.bit {
            None => 2,
            Some(b) => b as u8,
        };
        [self.kind.code(), it[0], it[1], it[2], it[3], bit]
    }
}

impl fmt::Display for MineTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bit = self.bit.map_or_else(|| "_".to_string(), |b| b.to_string());
        write!(f, "({:?}, {}, {})", self.kind, self.iteration, bit)
    }
}

/// Certificate rank. `Bottom` is the vote-free placeholder every bit has,
/// `Input` the set-of-signed-inputs certificate; both rank below every
/// iteration certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rank {
    Bottom,
    Input,
    Iteration(u32),
}

/// A quorum of eligible signers vouching for one bit at one rank.
///
/// Validity depends only on public verification state, which is monotone
/// (a successful mining record is never revoked), so a positive check is
/// cached on the certificate itself.
#[derive(Debug)]
pub struct Certificate {
    pub rank: Rank,
    pub bit: Bit,
    pub signers: Vec<NodeId>,
    verified: AtomicBool,
}

impl Certificate {
    pub fn new(rank: Rank, bit: Bit, mut signers: Vec<NodeId>) -> Self {
        signers.sort_unstable();
        signers.dedup();
        Certificate { rank, bit, signers, verified: AtomicBool::new(false) }
    }

    pub fn bottom(bit: Bit) -> Self {
        Certificate::new(Rank::Bottom, bit, Vec::new())
    }

    /// The descriptor every signer must have mined.
    pub fn signer_tag(&self) -> Option<MineTag> {
        match self.rank {
            Rank::Bottom => None,
            Rank::Input => Some(MineTag::status(1, Some(self.bit))),
            Rank::Iteration(r) => Some(MineTag::vote(r, self.bit)),
        }
    }

    pub(crate) fn is_known_valid(&self) -> bool {
        self.verified.load(Ordering::Relaxed)
    }

    pub(crate) fn mark_valid(&self) {
        self.verified.store(true, Ordering::Relaxed);
    }
}

impl PartialEq for Certificate {
    fn eq(&self, other: &Self) -> bool {
        self.rank == other.rank && self.bit == other.bit && self.signers == other.signers
    }
}

impl Eq for Certificate {}

impl Hash for Certificate {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank.hash(state);
        self.bit.hash(state);
        self.signers.hash(state);
    }
}

/// A leader proposal; also travels attached to votes.
#[derive(Debug)]
pub struct Proposal {
    pub proposer: NodeId,
    pub iteration: u32,
    pub bit: Bit,
    pub cert: Option<Arc<Certificate>>,
    verified: AtomicBool,
}

impl Proposal {
    pub fn new(proposer: NodeId, iteration: u32, bit: Bit, cert: Option<Arc<Certificate>>) -> Self {
        Proposal { proposer, iteration, bit, cert, verified: AtomicBool::new(false) }
    }

    pub fn rank(&self) -> Rank {
        self.cert.as_ref().map_or(Rank::Bottom, |c| c.rank)
    }

    pub(crate) fn is_known_valid(&self) -> bool {
        self.verified.load(Ordering::Relaxed)
    }

    pub(crate) fn mark_valid(&self) {
        self.verified.store(true, Ordering::Relaxed);
    }
}

impl PartialEq for Proposal {
    fn eq(&self, other: &Self) -> bool {
        self.proposer == other.proposer
            && self.iteration == other.iteration
            && self.bit == other.bit
            && self.cert == other.cert
    }
}

impl Eq for Proposal {}

impl Hash for Proposal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.proposer.hash(state);
        self.iteration.hash(state);
        self.bit.hash(state);
        self.cert.hash(state);
    }
}

/// Payload of an envelope.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    /// The designated sender's bit in the broadcast front end; authenticated
    /// by the envelope sender only, never mined.
    BroadcastInput(Bit),
    Status { iteration: u32, bit: Option<Bit>, cert: Option<Arc<Certificate>> },
    Propose(Arc<Proposal>),
    Vote { iteration: u32, bit: Bit, proposal: Option<Arc<Proposal>> },
    Commit { iteration: u32, bit: Bit, cert: Arc<Certificate> },
    Terminate { bit: Bit, iteration: u32, committers: Arc<[NodeId]> },
}

impl Message {
    /// Mining descriptor the sender must be eligible for.
    pub fn tag(&self) -> Option<MineTag> {
        match self {
            Message::BroadcastInput(_) => None,
            Message::Status { iteration, bit, .. } => Some(MineTag::status(*iteration, *bit)),
            Message::Propose(p) => Some(MineTag::propose(p.iteration, p.bit)),
            Message::Vote { iteration, bit, .. } => Some(MineTag::vote(*iteration, *bit)),
            Message::Commit { iteration, bit, .. } => Some(MineTag::commit(*iteration, *bit)),
            Message::Terminate { bit, .. } => Some(MineTag::terminate(*bit)),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Message::BroadcastInput(_) => "input",
            Message::Status { .. } => "status",
            Message::Propose(_) => "propose",
            Message::Vote { .. } => "vote",
            Message::Commit { .. } => "commit",
            Message::Terminate { .. } => "terminate",
        }
    }

    pub fn summary(&self) -> MessageSummary {
        let (iteration, bit, cert_rank, attached) = match self {
            Message::BroadcastInput(b) => (0, Some(*b), None, 0),
            Message::Status { iteration, bit, cert } => (
                *iteration,
                *bit,
                cert.as_ref().map(|c| c.rank),
                cert.as_ref().map_or(0, |c| c.signers.len()),
            ),
            Message::Propose(p) => (
                p.iteration,
                Some(p.bit),
                Some(p.rank()),
                p.cert.as_ref().map_or(0, |c| c.signers.len()),
            ),
            Message::Vote { iteration, bit, proposal } => {
                (*iteration, Some(*bit), proposal.as_ref().map(|p| p.rank()), 0)
            }
            Message::Commit { iteration, bit, cert } => {
                (*iteration, Some(*bit), Some(cert.rank), cert.signers.len())
            }
            Message::Terminate { bit, iteration, committers } => {
                (*iteration, Some(*bit), None, committers.len())
            }
        };
        MessageSummary { kind: self.kind_name(), iteration, bit, cert_rank, attached }
    }
}

/// Compact, serializable view of a message for traces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MessageSummary {
    pub kind: &'static str,
    pub iteration: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bit: Option<Bit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cert_rank: Option<Rank>,
    #[serde(skip_serializing_if = "is_zero")]
    pub attached: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}
