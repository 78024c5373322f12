use std::fmt;

use serde::{Deserialize, Serialize};

use crate::net::World;
use crate::types::{Bit, NodeId};

/// Exactly one per trial. Checked in declaration order after
/// `ConsistentValid`, which only applies when nothing else does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    ConsistentValid,
    /// The adversary could not carry out its attack within budget.
    AttackFailed,
    ConsistencyViolation,
    ValidityViolation,
    NonTermination,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::ConsistentValid,
        Outcome::AttackFailed,
        Outcome::ConsistencyViolation,
        Outcome::ValidityViolation,
        Outcome::NonTermination,
    ];

    /// Outcomes that fail a run (and the command-line exit code).
    pub fn is_violation(self) -> bool {
        matches!(self, Outcome::ConsistencyViolation | Outcome::ValidityViolation | Outcome::NonTermination)
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::ConsistentValid => "consistent-valid",
            Outcome::AttackFailed => "attack-failed",
            Outcome::ConsistencyViolation => "consistency-violation",
            Outcome::ValidityViolation => "validity-violation",
            Outcome::NonTermination => "non-termination",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What validity demands of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidityRule {
    /// Agreement: if all forever-honest inputs equal b, every output is b.
    Agreement(Vec<Bit>),
    /// Broadcast: if the sender stays honest, every output is its bit.
    Broadcast { sender: NodeId, input: Bit },
}

/// Classifies a finished run from forever-honest outputs.
pub fn classify(
    outputs: &[Option<Bit>],
    forever_honest: &[bool],
    rule: &ValidityRule,
    attack_failed: bool,
) -> Outcome {
    if attack_failed {
        return Outcome::AttackFailed;
    }
    let honest: Vec<usize> = (0..outputs.len()).filter(|i| forever_honest[*i]).collect();
    let decided: Vec<Bit> = honest.iter().filter_map(|i| outputs[*i]).collect();
    if decided.windows(2).any(|w| w[0] != w[1]) {
        return Outcome::ConsistencyViolation;
    }
    let required = match rule {
        ValidityRule::Agreement(inputs) => {
            let mut hi = honest.iter().map(|i| inputs[*i]);
            match hi.next() {
                Some(first) if hi.all(|b| b == first) => Some(first),
                _ => None,
            }
        }
        ValidityRule::Broadcast { sender, input } => forever_honest[sender.index()].then_some(*input),
    };
    if let Some(b) = required {
        if decided.iter().any(|d| *d != b) {
            return Outcome::ValidityViolation;
        }
    }
    if decided.len() < honest.len() {
        return Outcome::NonTermination;
    }
    Outcome::ConsistentValid
}

pub(crate) fn classify_world(world: &World, rule: &ValidityRule) -> Outcome {
    let n = world.n();
    let outputs: Vec<Option<Bit>> = world.outputs().iter().map(|o| o.map(|(b, _)| b)).collect();
    let honest: Vec<bool> = (0..n).map(|i| world.ledger().forever_honest(NodeId(i))).collect();
    classify(&outputs, &honest, rule, world.adversary().attack_failed())
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: Option<Bit> = Some(Bit::Zero);
    const I: Option<Bit> = Some(Bit::One);

    #[test]
    fn mixed_outputs_are_inconsistent() {
        let rule = ValidityRule::Agreement(vec![Bit::Zero; 3]);
        assert_eq!(classify(&[O, O, I], &[true; 3], &rule, false), Outcome::ConsistencyViolation);
    }

    #[test]
    fn unanimous_inputs_must_be_output() {
        let rule = ValidityRule::Agreement(vec![Bit::One; 3]);
        assert_eq!(classify(&[I, I, I], &[true; 3], &rule, false), Outcome::ConsistentValid);
        assert_eq!(classify(&[O, O, O], &[true; 3], &rule, false), Outcome::ValidityViolation);
        // A corrupt node's input and output do not count.
        let rule = ValidityRule::Agreement(vec![Bit::One, Bit::One, Bit::Zero]);
        assert_eq!(classify(&[I, I, O], &[true, true, false], &rule, false), Outcome::ConsistentValid);
    }

    #[test]
    fn missing_output_is_non_termination() {
        let rule = ValidityRule::Agreement(vec![Bit::Zero, Bit::One, Bit::One]);
        assert_eq!(classify(&[O, None, O], &[true; 3], &rule, false), Outcome::NonTermination);
        assert_eq!(classify(&[O, None, O], &[true, false, true], &rule, false), Outcome::ConsistentValid);
    }

    #[test]
    fn broadcast_validity_only_with_honest_sender() {
        let rule = ValidityRule::Broadcast { sender: NodeId(0), input: Bit::One };
        assert_eq!(classify(&[I, O, O], &[true; 3], &rule, false), Outcome::ConsistencyViolation);
        assert_eq!(classify(&[O, O, O], &[true; 3], &rule, false), Outcome::ValidityViolation);
        assert_eq!(classify(&[O, O, O], &[false, true, true], &rule, false), Outcome::ConsistentValid);
    }

    #[test]
    fn attack_failure_takes_precedence() {
        let rule = ValidityRule::Agreement(vec![Bit::One; 2]);
        assert_eq!(classify(&[O, I], &[true; 2], &rule, true), Outcome::AttackFailed);
    }
}
