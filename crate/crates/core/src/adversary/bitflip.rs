use super::{Adversary, AdversaryControl};
use crate::message::Message;
use crate::types::NodeId;

/// Whenever an honest node votes for `b`, corrupts it on the spot and sends
/// a vote for the opposite bit in its name, in the same round. The injected
/// vote reuses the node's eligibility, so it only verifies when eligibility
/// ignores the bit.
#[derive(Default)]
pub struct BitFlip {
    flipped: u64,
    out_of_budget: u64,
}

impl Adversary for BitFlip {
    fn name(&self) -> &'static str {
        "bitflip"
    }

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>) {
        let votes: Vec<(NodeId, u32, crate::types::Bit)> = ctl
            .observed()
            .iter()
            .filter(|r| r.honest)
            .filter_map(|r| match &*r.payload {
                Message::Vote { iteration, bit, .. } => Some((r.sender, *iteration, *bit)),
                _ => None,
            })
            .collect();
        for (sender, iteration, bit) in votes {
            if !ctl.is_corrupt(sender) && ctl.corrupt(sender).is_err() {
                self.out_of_budget += 1;
                continue;
            }
            let msg = Message::Vote { iteration, bit: bit.opposite(), proposal: None };
            if ctl.multicast_as(sender, msg).is_ok() {
                self.flipped += 1;
            }
        }
    }

    fn schedule_delay(&mut self, _envelope: &crate::net::Envelope, _delta: u32) -> u32 {
        1
    }

    fn counters(&self) -> Vec<(&'static str, u64)> {
        vec![("flipped_votes", self.flipped), ("flip_out_of_budget", self.out_of_budget)]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
