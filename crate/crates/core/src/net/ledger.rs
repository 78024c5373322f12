use std::collections::BTreeMap;

use serde::Serialize;

use super::SimError;
use crate::types::{NodeId, RoundIndex};

/// Who is corrupt and since when. Only ever grows, never past `budget`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CorruptionLedger {
    budget: u32,
    corrupted: BTreeMap<NodeId, RoundIndex>,
}

impl CorruptionLedger {
    pub fn new(budget: u32) -> Self {
        CorruptionLedger { budget, corrupted: BTreeMap::new() }
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.corrupted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corrupted.is_empty()
    }

    pub fn remaining(&self) -> u32 {
        self.budget - self.corrupted.len() as u32
    }

    pub fn record(&mut self, target: NodeId, round: RoundIndex) -> Result<(), SimError> {
        if self.corrupted.contains_key(&target) {
            return Err(SimError::AlreadyCorrupt(target));
        }
        if self.corrupted.len() as u32 >= self.budget {
            return Err(SimError::BudgetExceeded { budget: self.budget });
        }
        self.corrupted.insert(target, round);
        Ok(())
    }

    pub fn corrupted_at(&self, node: NodeId) -> Option<RoundIndex> {
        self.corrupted.get(&node).copied()
    }

    pub fn is_corrupt(&self, node: NodeId) -> bool {
        self.corrupted.contains_key(&node)
    }

    /// Honest when round `round`'s honest handlers ran. A node corrupted
    /// during round `round` was still honest when it acted in that round.
    pub fn so_far_honest(&self, node: NodeId, round: RoundIndex) -> bool {
        self.corrupted_at(node).is_none_or(|c| c >= round)
    }

    pub fn forever_honest(&self, node: NodeId) -> bool {
        !self.is_corrupt(node)
    }

    pub fn eventually_corrupt(&self, node: NodeId) -> bool {
        self.is_corrupt(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, RoundIndex)> + '_ {
        self.corrupted.iter().map(|(n, r)| (*n, *r))
    }
}
