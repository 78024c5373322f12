//! Shared fixtures: a scripted adversary and a hand-built world.
#![allow(dead_code)]

use subq_core::adversary::{Adversary, AdversaryControl};
use subq_core::fmine::FMine;
use subq_core::message::Message;
use subq_core::net::{NetworkMode, World, WorldConfig, WorldOptions};
use subq_core::protocol::ProtocolParams;
use subq_core::types::{Bit, NodeId, RoundIndex};

/// Corrupts `corrupt` before round 1, then sends each scripted message in
/// its round, mining for the sender first.
#[derive(Default)]
pub struct Script {
    pub corrupt: Vec<NodeId>,
    pub sends: Vec<(u32, NodeId, Option<Vec<NodeId>>, Message)>,
}

impl Script {
    pub fn new(corrupt: &[u32]) -> Self {
        Script { corrupt: corrupt.iter().copied().map(NodeId).collect(), sends: Vec::new() }
    }

    pub fn send(mut self, round: u32, from: u32, to: Option<&[u32]>, msg: Message) -> Self {
        let to = to.map(|ids| ids.iter().copied().map(NodeId).collect());
        self.sends.push((round, NodeId(from), to, msg));
        self
    }
}

impl Adversary for Script {
    fn name(&self) -> &'static str {
        "script"
    }

    fn setup(&mut self, ctl: &mut AdversaryControl<'_>) {
        for id in &self.corrupt {
            ctl.corrupt(*id).expect("within budget");
        }
    }

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>) {
        let now = ctl.round().0;
        for (round, from, to, msg) in self.sends.iter().filter(|s| s.0 == now) {
            let _ = round;
            if let Some(tag) = msg.tag() {
                ctl.mine(*from, tag).expect("corrupt sender");
            }
            match to {
                Some(ids) => ctl.send_as(*from, ids.clone(), msg.clone()).expect("scripted send"),
                None => ctl.multicast_as(*from, msg.clone()).expect("scripted multicast"),
            };
        }
    }

    fn schedule_delay(&mut self, _envelope: &subq_core::net::Envelope, _delta: u32) -> u32 {
        1
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

pub fn bits(s: &str) -> Vec<Bit> {
    s.chars().map(|c| if c == '1' { Bit::One } else { Bit::Zero }).collect()
}

/// A synchronous world running `params` with the given inputs.
pub fn world(params: ProtocolParams, inputs: &[Bit], adversary: impl Adversary + 'static) -> World {
    let nodes = (0..params.n).map(|i| params.node(NodeId(i), inputs[i as usize], RoundIndex(1))).collect();
    let fmine = FMine::new(params.seed, params.difficulty().unwrap(), true);
    let config = WorldConfig {
        n: params.n,
        f: params.f,
        mode: NetworkMode::Sync,
        strongly_adaptive: false,
        seed: params.seed,
        max_rounds: 400,
    };
    World::with_options(config, nodes, fmine, Box::new(adversary), WorldOptions::default()).unwrap()
}

pub fn run_rounds(w: &mut World, k: u32) {
    for _ in 0..k {
        w.step_round().unwrap();
    }
}

/// Messages of `kind` sent by `sender` in `round`.
pub fn sent(w: &World, round: u32, sender: u32, kind: &str) -> Vec<Message> {
    w.sent_log()
        .iter()
        .filter(|r| r.round.0 == round && r.sender.0 == sender && r.payload.kind_name() == kind)
        .map(|r| (*r.payload).clone())
        .collect()
}
