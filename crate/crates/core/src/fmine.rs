//! The ideal mining (sortition) functionality.
//!
//! `mine` flips a memoized Bernoulli coin for `(node, descriptor)` the first
//! time it is called and returns the stored coin afterwards. `verify` lets
//! anybody check a coin, but only after its owner has mined it; it never flips
//! one itself.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::message::{MineTag, MsgType};
use crate::rng;
use crate::types::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DifficultyError {
    #[error("committee sampling needs n > lambda (n = {n}, lambda = {lambda})")]
    CommitteeTooLarge { n: u32, lambda: u32 },
    #[error("lambda must be positive")]
    ZeroLambda,
}

/// Success probability per message descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DifficultyMap {
    committee: f64,
    propose: f64,
}

/// Proposal eligibility rate relative to `1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposeRate {
    /// `1/(2n)`: the phase-king protocol.
    HalfOverN,
    /// `1/n`: the certificate-ranking protocols.
    OneOverN,
}

impl DifficultyMap {
    /// Every attempt succeeds. Mining then degenerates into signing: a
    /// descriptor verifies iff its owner chose to produce it.
    pub fn warmup() -> Self {
        DifficultyMap { committee: 1.0, propose: 1.0 }
    }

    pub fn committee(n: u32, lambda: u32, rate: ProposeRate) -> Result<Self, DifficultyError> {
        if lambda == 0 {
            return Err(DifficultyError::ZeroLambda);
        }
        if n <= lambda {
            return Err(DifficultyError::CommitteeTooLarge { n, lambda });
        }
        let propose = match rate {
            ProposeRate::HalfOverN => 1.0 / (2.0 * n as f64),
            ProposeRate::OneOverN => 1.0 / n as f64,
        };
        Ok(DifficultyMap { committee: lambda as f64 / n as f64, propose })
    }

    pub fn probability(&self, tag: &MineTag) -> f64 {
        match tag.kind {
            MsgType::Propose => self.propose,
            _ => self.committee,
        }
    }

    pub fn is_warmup(&self) -> bool {
        self.committee >= 1.0
    }
}

/// Outcome of one mining attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Coin {
    pub success: bool,
}

/// First flip of a coin, in flip order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Flip {
    pub node: NodeId,
    pub tag: MineTag,
    pub success: bool,
}

#[derive(Clone, Debug)]
pub struct FMine {
    seed: u64,
    difficulty: DifficultyMap,
    bit_specific: bool,
    coins: HashMap<(NodeId, MineTag), bool>,
    flips: Vec<Flip>,
}

impl FMine {
    pub fn new(seed: u64, difficulty: DifficultyMap, bit_specific: bool) -> Self {
        FMine { seed, difficulty, bit_specific, coins: HashMap::new(), flips: Vec::new() }
    }

    pub fn difficulty(&self) -> &DifficultyMap {
        &self.difficulty
    }

    pub fn is_bit_specific(&self) -> bool {
        self.bit_specific
    }

    /// The key coins are stored under. Without bit-specific eligibility the
    /// bit is dropped, so a node eligible for `(Vote, r, 0)` is eligible for
    /// `(Vote, r, 1)` too.
    pub fn canonical(&self, tag: MineTag) -> MineTag {
        if self.bit_specific {
            tag
        } else {
            tag.without_bit()
        }
    }

    /// Mining attempt by `node` for itself. Callers are responsible for
    /// checking that they act for `node`.
    pub fn mine(&mut self, node: NodeId, tag: MineTag) -> Coin {
        let key = (node, self.canonical(tag));
        if let Some(&success) = self.coins.get(&key) {
            return Coin { success };
        }
        let success = self.flip(node, key.1);
        self.coins.insert(key, success);
        self.flips.push(Flip { node, tag: key.1, success });
        Coin { success }
    }

    /// `true` iff `node` has mined `tag` and the coin came up heads.
    pub fn verify(&self, tag: MineTag, node: NodeId) -> bool {
        self.coins.get(&(node, self.canonical(tag))).copied().unwrap_or(false)
    }

    pub fn has_mined(&self, node: NodeId, tag: MineTag) -> bool {
        self.coins.contains_key(&(node, self.canonical(tag)))
    }

    pub fn flips(&self) -> &[Flip] {
        &self.flips
    }

    /// The coin `node` would get for `tag`, without recording anything.
    ///
    /// Coins are a pure function of the seed, so post-run audits can ask
    /// "was this node eligible" for descriptors nobody mined. Never hand this
    /// to protocol or adversary code.
    pub fn hypothetical(&self, node: NodeId, tag: MineTag) -> bool {
        let tag = self.canonical(tag);
        self.coins.get(&(node, tag)).copied().unwrap_or_else(|| self.flip(node, tag))
    }

    fn flip(&self, node: NodeId, canonical: MineTag) -> bool {
        let mut ctx = [0u8; 10];
        ctx[..4].copy_from_slice(&node.0.to_le_bytes());
        ctx[4..].copy_from_slice(&canonical.encode());
        rng::stream(self.seed, "fmine", &ctx).gen_bool(self.difficulty.probability(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Bit;

    fn committee(seed: u64) -> FMine {
        FMine::new(seed, DifficultyMap::committee(100, 30, ProposeRate::OneOverN).unwrap(), true)
    }

    #[test]
    fn mining_is_memoized() {
        let mut f = committee(1);
        let tag = MineTag::vote(1, Bit::Zero);
        for i in 0..100 {
            let a = f.mine(NodeId(i), tag);
            assert_eq!(a, f.mine(NodeId(i), tag));
        }
        assert_eq!(f.flips().len(), 100);
    }

    #[test]
    fn verify_before_mine_is_false_and_pure() {
        let f = committee(2);
        for i in 0..100 {
            assert!(!f.verify(MineTag::vote(1, Bit::One), NodeId(i)));
        }
        assert!(f.flips().is_empty());
    }

    #[test]
    fn verify_matches_coin_after_mine() {
        let mut f = committee(3);
        let tag = MineTag::commit(4, Bit::One);
        for i in 0..100 {
            let c = f.mine(NodeId(i), tag);
            assert_eq!(f.verify(tag, NodeId(i)), c.success);
        }
    }

    #[test]
    fn probabilities_follow_message_type() {
        let d = DifficultyMap::committee(100, 30, ProposeRate::OneOverN).unwrap();
        assert!((d.probability(&MineTag::vote(1, Bit::Zero)) - 0.3).abs() < 1e-12);
        assert!((d.probability(&MineTag::terminate(Bit::One)) - 0.3).abs() < 1e-12);
        assert!((d.probability(&MineTag::propose(1, Bit::One)) - 0.01).abs() < 1e-12);
        let d = DifficultyMap::committee(100, 30, ProposeRate::HalfOverN).unwrap();
        assert!((d.probability(&MineTag::propose(1, Bit::One)) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn committee_mode_requires_n_above_lambda() {
        assert_eq!(
            DifficultyMap::committee(30, 30, ProposeRate::OneOverN),
            Err(DifficultyError::CommitteeTooLarge { n: 30, lambda: 30 })
        );
    }

    #[test]
    fn coins_do_not_depend_on_query_order() {
        let mut a = committee(9);
        let mut b = committee(9);
        let tags = [MineTag::vote(1, Bit::Zero), MineTag::vote(1, Bit::One), MineTag::status(2, None)];
        let fwd: Vec<_> = tags.iter().map(|t| a.mine(NodeId(5), *t)).collect();
        let rev: Vec<_> = tags.iter().rev().map(|t| b.mine(NodeId(5), *t)).collect();
        assert_eq!(fwd, rev.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn hypothetical_agrees_with_mine_and_records_nothing() {
        let mut f = committee(11);
        let tag = MineTag::vote(2, Bit::One);
        let guess: Vec<_> = (0..50).map(|i| f.hypothetical(NodeId(i), tag)).collect();
        assert!(f.flips().is_empty());
        let real: Vec<_> = (0..50).map(|i| f.mine(NodeId(i), tag).success).collect();
        assert_eq!(guess, real);
    }

    #[test]
    fn bit_agnostic_mode_shares_coins_across_bits() {
        let mut f = FMine::new(5, DifficultyMap::warmup(), false);
        f.mine(NodeId(7), MineTag::vote(1, Bit::Zero));
        assert!(f.verify(MineTag::vote(1, Bit::One), NodeId(7)));
        let mut g = FMine::new(5, DifficultyMap::warmup(), true);
        g.mine(NodeId(7), MineTag::vote(1, Bit::Zero));
        assert!(!g.verify(MineTag::vote(1, Bit::One), NodeId(7)));
    }
}
