//! Bookkeeping shared by the protocols: validity rules for certificates and
//! proposals, the best certificate known per bit, and per-iteration tallies.

use std::collections::HashMap;
use std::sync::Arc;

use crate::message::{Certificate, MineTag, Proposal, Rank};
use crate::net::Verifier;
use crate::types::{Bit, NodeId};

/// Which certificate ranks a protocol accepts and how many signers each needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertRules {
    /// Proposals may come without a certificate (bottom rank).
    pub bottom: bool,
    /// Signers needed for an input certificate, if the protocol has them.
    pub input: Option<u32>,
    pub normal: u32,
}

impl CertRules {
    fn threshold(&self, rank: Rank) -> Option<u32> {
        match rank {
            Rank::Bottom => self.bottom.then_some(0),
            Rank::Input => self.input,
            Rank::Iteration(r) if r >= 1 => Some(self.normal),
            Rank::Iteration(_) => None,
        }
    }

    pub fn check_cert(&self, cert: &Certificate, v: Verifier<'_>) -> bool {
        if cert.is_known_valid() {
            return true;
        }
        let Some(needed) = self.threshold(cert.rank) else { return false };
        if cert.signers.len() < needed as usize {
            return false;
        }
        let ok = match cert.signer_tag() {
            None => true,
            Some(tag) => cert.signers.iter().all(|s| v.verify(tag, *s)),
        };
        if ok {
            cert.mark_valid();
        }
        ok
    }

    /// A proposal is valid if its proposer was eligible, its certificate
    /// (if any) is valid, vouches for the proposed bit and predates the
    /// proposal's iteration. `leader` restricts who may propose in warmup.
    pub fn check_proposal(&self, p: &Proposal, v: Verifier<'_>, leader: Option<NodeId>) -> bool {
        if p.is_known_valid() {
            return true;
        }
        if leader.is_some_and(|l| l != p.proposer) {
            return false;
        }
        if !v.verify(MineTag::propose(p.iteration, p.bit), p.proposer) {
            return false;
        }
        let cert_ok = match &p.cert {
            None => self.bottom,
            Some(c) => {
                c.bit == p.bit && c.rank < Rank::Iteration(p.iteration) && self.check_cert(c, v)
            }
        };
        if cert_ok {
            p.mark_valid();
        }
        cert_ok
    }
}

/// The highest-ranked valid certificate seen so far for each bit.
#[derive(Clone, Debug, Default)]
pub struct CertBook {
    best: [Option<Arc<Certificate>>; 2],
}

impl CertBook {
    /// Keeps `cert` if it outranks what is known for its bit. The caller
    /// must have validated it.
    pub fn offer(&mut self, cert: &Arc<Certificate>) -> bool {
        let slot = &mut self.best[cert.bit.as_index()];
        if slot.as_ref().is_none_or(|c| cert.rank > c.rank) {
            *slot = Some(cert.clone());
            true
        } else {
            false
        }
    }

    pub fn best(&self, bit: Bit) -> Option<&Arc<Certificate>> {
        self.best[bit.as_index()].as_ref()
    }

    pub fn rank(&self, bit: Bit) -> Option<Rank> {
        self.best(bit).map(|c| c.rank)
    }

    /// The highest certificate overall; equal ranks go to bit 0.
    pub fn highest(&self) -> Option<&Arc<Certificate>> {
        match (self.best(Bit::Zero), self.best(Bit::One)) {
            (Some(z), Some(o)) => Some(if o.rank > z.rank { o } else { z }),
            (z, o) => z.or(o),
        }
    }

    /// Whether a certificate for the opposite of `bit` strictly outranks `rank`.
    pub fn blocks(&self, bit: Bit, rank: Rank) -> bool {
        self.rank(bit.opposite()).is_some_and(|r| r > rank)
    }
}

/// Distinct senders per (iteration, bit).
#[derive(Clone, Debug, Default)]
pub struct Tally {
    map: HashMap<(u32, Bit), Vec<NodeId>>,
}

impl Tally {
    /// Records `node`; returns the new count if it was not already present.
    pub fn insert(&mut self, iteration: u32, bit: Bit, node: NodeId) -> Option<usize> {
        let list = self.map.entry((iteration, bit)).or_default();
        match list.binary_search(&node) {
            Ok(_) => None,
            Err(pos) => {
                list.insert(pos, node);
                Some(list.len())
            }
        }
    }

    pub fn count(&self, iteration: u32, bit: Bit) -> usize {
        self.map.get(&(iteration, bit)).map_or(0, Vec::len)
    }

    pub fn senders(&self, iteration: u32, bit: Bit) -> &[NodeId] {
        self.map.get(&(iteration, bit)).map_or(&[], Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmine::{DifficultyMap, FMine};

    fn cert(rank: Rank, bit: Bit, signers: &[u32]) -> Arc<Certificate> {
        Arc::new(Certificate::new(rank, bit, signers.iter().map(|s| NodeId(*s)).collect()))
    }

    #[test]
    fn book_keeps_strictly_higher_per_bit() {
        let mut book = CertBook::default();
        assert!(book.highest().is_none());
        assert!(book.offer(&cert(Rank::Iteration(2), Bit::Zero, &[])));
        assert!(!book.offer(&cert(Rank::Iteration(2), Bit::Zero, &[1])));
        assert!(book.offer(&cert(Rank::Iteration(4), Bit::One, &[])));
        assert_eq!(book.highest().unwrap().bit, Bit::One);
        assert!(book.blocks(Bit::Zero, Rank::Iteration(3)));
        assert!(!book.blocks(Bit::Zero, Rank::Iteration(4)));
        assert!(!book.blocks(Bit::One, Rank::Iteration(2)));
        assert!(book.blocks(Bit::One, Rank::Iteration(1)));
    }

    #[test]
    fn equal_rank_tie_goes_to_zero() {
        let mut book = CertBook::default();
        book.offer(&cert(Rank::Iteration(3), Bit::One, &[]));
        book.offer(&cert(Rank::Iteration(3), Bit::Zero, &[]));
        assert_eq!(book.highest().unwrap().bit, Bit::Zero);
    }

    #[test]
    fn tally_counts_distinct_senders() {
        let mut t = Tally::default();
        assert_eq!(t.insert(1, Bit::One, NodeId(4)), Some(1));
        assert_eq!(t.insert(1, Bit::One, NodeId(4)), None);
        assert_eq!(t.insert(1, Bit::One, NodeId(2)), Some(2));
        assert_eq!(t.count(1, Bit::Zero), 0);
        assert_eq!(t.senders(1, Bit::One), &[NodeId(2), NodeId(4)]);
    }

    #[test]
    fn certificates_need_enough_eligible_signers() {
        let mut fm = FMine::new(1, DifficultyMap::warmup(), true);
        let rules = CertRules { bottom: false, input: Some(2), normal: 3 };
        for i in 0..3 {
            fm.mine(NodeId(i), MineTag::vote(2, Bit::One));
        }
        let v = Verifier::new(&fm);
        assert!(rules.check_cert(&cert(Rank::Iteration(2), Bit::One, &[0, 1, 2]), v));
        assert!(!rules.check_cert(&cert(Rank::Iteration(2), Bit::One, &[0, 1]), v));
        // Node 3 never mined, so its signature does not verify.
        assert!(!rules.check_cert(&cert(Rank::Iteration(2), Bit::One, &[0, 1, 3]), v));
        assert!(!rules.check_cert(&cert(Rank::Iteration(2), Bit::Zero, &[0, 1, 2]), v));
        assert!(!rules.check_cert(&cert(Rank::Bottom, Bit::Zero, &[]), v));
        assert!(!rules.check_cert(&cert(Rank::Input, Bit::Zero, &[0, 1]), v));
    }

    #[test]
    fn proposals_check_eligibility_leader_and_cert() {
        let mut fm = FMine::new(1, DifficultyMap::warmup(), true);
        fm.mine(NodeId(2), MineTag::propose(3, Bit::Zero));
        for i in 0..3 {
            fm.mine(NodeId(i), MineTag::vote(2, Bit::Zero));
            fm.mine(NodeId(i), MineTag::vote(3, Bit::Zero));
        }
        let v = Verifier::new(&fm);
        let rules = CertRules { bottom: true, input: None, normal: 3 };
        let good = Proposal::new(NodeId(2), 3, Bit::Zero, Some(cert(Rank::Iteration(2), Bit::Zero, &[0, 1, 2])));
        assert!(rules.check_proposal(&good, v, None));
        assert!(rules.check_proposal(&Proposal::new(NodeId(2), 3, Bit::Zero, None), v, Some(NodeId(2))));
        assert!(!rules.check_proposal(&Proposal::new(NodeId(2), 3, Bit::Zero, None), v, Some(NodeId(3))));
        // Not eligible for the other bit.
        assert!(!rules.check_proposal(&Proposal::new(NodeId(2), 3, Bit::One, None), v, None));
        // A certificate from the proposal's own iteration is not a prior one.
        let same = Proposal::new(NodeId(2), 3, Bit::Zero, Some(cert(Rank::Iteration(3), Bit::Zero, &[0, 1, 2])));
        assert!(!rules.check_proposal(&same, v, None));
    }
}
