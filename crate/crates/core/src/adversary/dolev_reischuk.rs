//! The message-complexity attack pair against broadcast.
//!
//! Run A corrupts a set V of ⌊f/2⌋ non-sender nodes. They follow the protocol
//! except that they never talk to each other and each one ignores the first
//! ⌊f/2⌋ messages it gets from outside V. Run A′ leaves one member p of V
//! honest and instead corrupts whoever sends p one of its first ⌊f/2⌋
//! messages, removing the message after the fact. Nodes outside V cannot
//! tell the two runs apart.

use std::collections::HashMap;

use rand::Rng;

use super::{Adversary, AdversaryControl, Capabilities};
use crate::message::Message;
use crate::net::{Delivery, Envelope};
use crate::rng;
use crate::types::NodeId;

/// Shared parameters of the pair: the same seed yields the same V and p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrSetup {
    pub n: u32,
    pub sender: NodeId,
    /// Lowest ids other than the sender, ascending.
    pub v: Vec<NodeId>,
    pub quota: u32,
    pub p: NodeId,
}

impl DrSetup {
    pub fn new(n: u32, f: u32, sender: NodeId, seed: u64) -> Self {
        let half = f / 2;
        let v: Vec<NodeId> = (0..n).map(NodeId).filter(|id| *id != sender).take(half as usize).collect();
        let pick = rng::stream(seed, "dr-target", &[]).gen_range(0..v.len());
        DrSetup { n, sender, p: v[pick], v, quota: half }
    }

    pub fn in_v(&self, id: NodeId) -> bool {
        self.v.binary_search(&id).is_ok()
    }

    /// Every node except the other members of V.
    fn recipients_for(&self, member: NodeId) -> Vec<NodeId> {
        (0..self.n).map(NodeId).filter(|id| *id == member || !self.in_v(*id)).collect()
    }
}

/// V-side behaviour common to both runs: drop mail from the rest of V and the
/// first `quota` deliveries from outside V, then run the honest logic.
struct Puppets {
    setup: DrSetup,
    ignored: HashMap<NodeId, u32>,
}

impl Puppets {
    fn step(&mut self, ctl: &mut AdversaryControl<'_>, members: &[NodeId]) {
        for &v in members {
            let Ok(inbox) = ctl.inbox(v) else { continue };
            let seen = self.ignored.entry(v).or_insert(0);
            let kept: Vec<Delivery> = inbox
                .into_iter()
                .filter(|d| {
                    if d.sender == v {
                        return true;
                    }
                    if self.setup.in_v(d.sender) {
                        return false;
                    }
                    if *seen < self.setup.quota {
                        *seen += 1;
                        return false;
                    }
                    true
                })
                .collect();
            let Ok(out) = ctl.puppet(v, &kept) else { continue };
            let to = self.setup.recipients_for(v);
            for msg in out {
                let _ = ctl.send_as(v, to.clone(), msg);
            }
        }
    }
}

pub struct DrA {
    puppets: Puppets,
}

impl DrA {
    pub fn new(setup: DrSetup) -> Self {
        DrA { puppets: Puppets { setup, ignored: HashMap::new() } }
    }

    pub fn setup(&self) -> &DrSetup {
        &self.puppets.setup
    }
}

impl Adversary for DrA {
    fn name(&self) -> &'static str {
        "dr-a"
    }

    fn setup(&mut self, ctl: &mut AdversaryControl<'_>) {
        for v in self.puppets.setup.v.clone() {
            let _ = ctl.corrupt(v);
        }
    }

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>) {
        let members = self.puppets.setup.v.clone();
        self.puppets.step(ctl, &members);
    }

    fn schedule_delay(&mut self, _envelope: &Envelope, _delta: u32) -> u32 {
        1
    }

    fn counters(&self) -> Vec<(&'static str, u64)> {
        let ignored: u32 = self.puppets.ignored.values().sum();
        vec![("dr_ignored", ignored as u64)]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

pub struct DrAPrime {
    puppets: Puppets,
    blocked: u32,
    /// Corrupted senders from outside V, who keep behaving honestly.
    turned: Vec<NodeId>,
    failed: bool,
}

impl DrAPrime {
    pub fn new(setup: DrSetup) -> Self {
        DrAPrime { puppets: Puppets { setup, ignored: HashMap::new() }, blocked: 0, turned: Vec::new(), failed: false }
    }

    pub fn setup(&self) -> &DrSetup {
        &self.puppets.setup
    }

    pub fn blocked(&self) -> u32 {
        self.blocked
    }
}

enum Attempt {
    Honest { envelope: u64 },
    Puppet { msg: Message },
}

impl Adversary for DrAPrime {
    fn name(&self) -> &'static str {
        "dr-aprime"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { strongly_adaptive: true }
    }

    fn setup(&mut self, ctl: &mut AdversaryControl<'_>) {
        let p = self.puppets.setup.p;
        for v in self.puppets.setup.v.clone() {
            if v != p {
                let _ = ctl.corrupt(v);
            }
        }
    }

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>) {
        let setup = self.puppets.setup.clone();
        let p = setup.p;
        let members: Vec<NodeId> = setup.v.iter().copied().filter(|v| *v != p).collect();
        self.puppets.step(ctl, &members);

        // Every attempt by a node outside V to reach p this round, in sender
        // order, honest multicasts first within a sender.
        let mut attempts: Vec<(NodeId, usize, Attempt)> = Vec::new();
        for rec in ctl.observed().iter().filter(|r| r.honest && !setup.in_v(r.sender)) {
            if let Some(envelope) = rec.envelope_to(p) {
                attempts.push((rec.sender, attempts.len(), Attempt::Honest { envelope }));
            }
        }
        for &s in &self.turned {
            let Ok(inbox) = ctl.inbox(s) else { continue };
            let Ok(out) = ctl.puppet(s, &inbox) else { continue };
            for msg in out {
                attempts.push((s, attempts.len(), Attempt::Puppet { msg }));
            }
        }
        attempts.sort_by_key(|(s, i, _)| (*s, *i));

        let everyone: Vec<NodeId> = (0..setup.n).map(NodeId).collect();
        let all_but_p: Vec<NodeId> = everyone.iter().copied().filter(|id| *id != p).collect();
        for (sender, _, attempt) in attempts {
            let block = self.blocked < setup.quota && !self.failed;
            match attempt {
                Attempt::Puppet { msg } => {
                    let to = if block { all_but_p.clone() } else { everyone.clone() };
                    if block {
                        self.blocked += 1;
                    }
                    let _ = ctl.send_as(sender, to, msg);
                }
                Attempt::Honest { envelope } => {
                    if !block {
                        continue;
                    }
                    if !ctl.is_corrupt(sender) {
                        if ctl.corrupt(sender).is_err() {
                            self.failed = true;
                            continue;
                        }
                        self.turned.push(sender);
                    }
                    if ctl.retract(envelope).is_ok() {
                        self.blocked += 1;
                    } else {
                        self.failed = true;
                    }
                }
            }
        }
        self.turned.sort();
    }

    fn schedule_delay(&mut self, _envelope: &Envelope, _delta: u32) -> u32 {
        1
    }

    fn attack_failed(&self) -> bool {
        self.failed
    }

    fn counters(&self) -> Vec<(&'static str, u64)> {
        let ignored: u32 = self.puppets.ignored.values().sum();
        vec![
            ("dr_ignored", ignored as u64),
            ("dr_blocked", self.blocked as u64),
            ("dr_turned", self.turned.len() as u64),
        ]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
