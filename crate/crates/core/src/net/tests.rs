use std::sync::{Arc, Mutex};

use proptest::prelude::*;

use super::*;
use crate::adversary::{Adversary, AdversaryControl, Capabilities};
use crate::fmine::{DifficultyMap, FMine};
use crate::message::Message;
use crate::types::Bit;

/// Multicasts `BroadcastInput(bit)` in every listed round and logs its inbox.
struct Chatter {
    rounds: Vec<u32>,
    log: Vec<(RoundIndex, Vec<(NodeId, RoundIndex)>)>,
}

impl NodeLogic for Chatter {
    fn on_round(&mut self, inbox: &[Delivery], ctx: &mut NodeContext<'_>) {
        self.log.push((ctx.round(), inbox.iter().map(|d| (d.sender, d.send_round)).collect()));
        if self.rounds.contains(&ctx.round().0) {
            ctx.multicast(Message::BroadcastInput(Bit::One));
        }
    }

    fn output(&self) -> Option<Bit> {
        None
    }

    fn is_halted(&self) -> bool {
        false
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

type Script = Box<dyn FnMut(&mut AdversaryControl<'_>) + Send>;

/// Runs a closure each round and picks delays from another.
struct Scripted {
    strong: bool,
    act: Script,
    delay: Box<dyn FnMut(&Envelope, u32) -> u32 + Send>,
}

impl Scripted {
    fn new(act: impl FnMut(&mut AdversaryControl<'_>) + Send + 'static) -> Self {
        Scripted { strong: false, act: Box::new(act), delay: Box::new(|_, d| d) }
    }
}

impl Adversary for Scripted {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { strongly_adaptive: self.strong }
    }

    fn on_round(&mut self, ctl: &mut AdversaryControl<'_>) {
        (self.act)(ctl)
    }

    fn schedule_delay(&mut self, envelope: &Envelope, delta: u32) -> u32 {
        (self.delay)(envelope, delta)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

fn config(n: u32, f: u32, mode: NetworkMode, strong: bool) -> WorldConfig {
    WorldConfig { n, f, mode, strongly_adaptive: strong, seed: 42, max_rounds: 20 }
}

fn world(cfg: WorldConfig, speak: &[u32], adv: Scripted) -> World {
    let nodes = (0..cfg.n)
        .map(|_| Box::new(Chatter { rounds: speak.to_vec(), log: Vec::new() }) as Box<dyn NodeLogic>)
        .collect();
    let fm = FMine::new(cfg.seed, DifficultyMap::warmup(), true);
    World::with_options(cfg, nodes, fm, Box::new(adv), WorldOptions { trace: true, inbox_digests: true }).unwrap()
}

fn log_of(w: &World, id: u32) -> &[(RoundIndex, Vec<(NodeId, RoundIndex)>)] {
    &w.node(NodeId(id)).as_any().downcast_ref::<Chatter>().unwrap().log
}

#[test]
fn sync_multicast_reaches_everyone_next_round() {
    let mut w = world(config(4, 1, NetworkMode::Sync, false), &[5], Scripted::new(|_| {}));
    for _ in 0..6 {
        w.step_round().unwrap();
    }
    let sends: Vec<_> = w
        .trace()
        .unwrap()
        .events()
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Send { round, sender, deliver_round, .. } if *sender == NodeId(2) => Some((*round, *deliver_round)),
            _ => None,
        })
        .collect();
    assert_eq!(sends, vec![(RoundIndex(5), RoundIndex(6)); 4]);
    for id in 0..4 {
        let (round, inbox) = &log_of(&w, id)[5];
        assert_eq!(*round, RoundIndex(6));
        assert_eq!(inbox.len(), 4);
        assert!(inbox.iter().all(|(_, sent)| *sent == RoundIndex(5)));
    }
    // One multicast per node, not one per recipient.
    assert_eq!(w.stats().honest_multicasts, 4);
    assert_eq!(w.trace().unwrap().honest_multicasts(), 4);
}

#[test]
fn partial_sync_delays_follow_the_scheduler() {
    let mut adv = Scripted::new(|_| {});
    adv.delay = Box::new(|e, delta| 1 + (e.recipient.0 % delta));
    let mut w = world(config(4, 1, NetworkMode::PartialSync { delta: 3 }, false), &[5], adv);
    for _ in 0..9 {
        w.step_round().unwrap();
    }
    let from2: Vec<(NodeId, RoundIndex)> = w
        .trace()
        .unwrap()
        .events()
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Send { sender, recipient, deliver_round, .. } if *sender == NodeId(2) => {
                Some((*recipient, *deliver_round))
            }
            _ => None,
        })
        .collect();
    assert_eq!(
        from2,
        vec![(NodeId(0), RoundIndex(6)), (NodeId(1), RoundIndex(7)), (NodeId(2), RoundIndex(8)), (NodeId(3), RoundIndex(6))]
    );
}

#[test]
fn scheduler_out_of_range_is_rejected() {
    let mut adv = Scripted::new(|_| {});
    adv.delay = Box::new(|_, _| 0);
    let mut w = world(config(3, 1, NetworkMode::PartialSync { delta: 2 }, false), &[1], adv);
    assert_eq!(w.step_round(), Err(SimError::InvalidDelay { delay: 0, delta: 2 }));
}

#[test]
fn corrupt_node_can_speak_in_the_same_round() {
    let adv = Scripted::new(|ctl| {
        if ctl.round() == RoundIndex(7) {
            ctl.corrupt(NodeId(3)).unwrap();
            ctl.multicast_as(NodeId(3), Message::BroadcastInput(Bit::Zero)).unwrap();
        }
    });
    let mut w = world(config(5, 3, NetworkMode::Sync, false), &[], adv);
    for _ in 0..8 {
        w.step_round().unwrap();
    }
    assert_eq!(w.ledger().corrupted_at(NodeId(3)), Some(RoundIndex(7)));
    let inbox = &log_of(&w, 0)[7].1;
    assert_eq!(inbox, &vec![(NodeId(3), RoundIndex(7))]);
    assert_eq!(w.stats().corrupt_sends, 1);
    assert_eq!(w.stats().honest_multicasts, 0);
}

#[test]
fn budget_and_double_corruption_are_enforced() {
    let results = Arc::new(Mutex::new(Vec::new()));
    let sink = results.clone();
    let adv = Scripted::new(move |ctl| {
        if ctl.round() == RoundIndex(1) {
            let mut r = sink.lock().unwrap();
            for id in [0, 1, 1, 2, 3] {
                r.push(ctl.corrupt(NodeId(id)));
            }
        }
    });
    let mut w = world(config(6, 3, NetworkMode::Sync, false), &[], adv);
    w.step_round().unwrap();
    assert_eq!(
        *results.lock().unwrap(),
        vec![
            Ok(()),
            Ok(()),
            Err(SimError::AlreadyCorrupt(NodeId(1))),
            Ok(()),
            Err(SimError::BudgetExceeded { budget: 3 })
        ]
    );
    assert_eq!(w.ledger().len(), 3);
}

#[test]
fn senders_cannot_be_forged() {
    let mut w = world(config(4, 1, NetworkMode::Sync, false), &[], Scripted::new(|_| {}));
    let msg = || Message::BroadcastInput(Bit::One);
    assert_eq!(w.multicast(Caller::Adversary, NodeId(1), msg()), Err(SimError::NotOwner(NodeId(1))));
    assert_eq!(w.multicast(Caller::Node(NodeId(0)), NodeId(1), msg()), Err(SimError::NotOwner(NodeId(1))));
    assert!(w.multicast(Caller::Node(NodeId(1)), NodeId(1), msg()).is_ok());
    w.corrupt(NodeId(1)).unwrap();
    assert_eq!(w.multicast(Caller::Node(NodeId(1)), NodeId(1), msg()), Err(SimError::NotOwner(NodeId(1))));
    assert!(w.multicast(Caller::Adversary, NodeId(1), msg()).is_ok());
}

#[test]
fn same_round_retraction_removes_the_envelope() {
    let mut adv = Scripted::new(|ctl| {
        if ctl.round() == RoundIndex(2) {
            let rec = ctl.observed().iter().find(|r| r.sender == NodeId(1)).unwrap().clone();
            ctl.corrupt(NodeId(1)).unwrap();
            for to in 0..4 {
                ctl.retract(rec.envelope_to(NodeId(to)).unwrap()).unwrap();
            }
        }
    });
    adv.strong = true;
    let mut w = world(config(4, 1, NetworkMode::Sync, true), &[2], adv);
    for _ in 0..3 {
        w.step_round().unwrap();
    }
    for id in [0, 2, 3] {
        let senders: Vec<NodeId> = log_of(&w, id)[2].1.iter().map(|(s, _)| *s).collect();
        assert_eq!(senders, vec![NodeId(0), NodeId(2), NodeId(3)]);
    }
    // The send still happened.
    assert_eq!(w.stats().honest_multicasts, 4);
    assert_eq!(w.stats().retractions, 4);
    let events = w.trace().unwrap().events();
    let retracted: Vec<u64> = events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Retract { envelope, .. } => Some(*envelope),
            _ => None,
        })
        .collect();
    assert!(events.iter().all(|e| !matches!(e, TraceEvent::Deliver { envelope, .. } if retracted.contains(envelope))));
}

#[test]
fn retraction_needs_the_capability() {
    let seen = Arc::new(Mutex::new(None));
    let sink = seen.clone();
    let adv = Scripted::new(move |ctl| {
        if ctl.round() == RoundIndex(1) {
            let id = ctl.observed()[0].first_envelope;
            ctl.corrupt(NodeId(0)).unwrap();
            *sink.lock().unwrap() = Some(ctl.retract(id));
        }
    });
    let mut w = world(config(3, 1, NetworkMode::Sync, false), &[1], adv);
    w.step_round().unwrap();
    assert_eq!(*seen.lock().unwrap(), Some(Err(SimError::CapabilityDisabled)));
}

#[test]
fn strong_strategy_rejected_without_capability() {
    let mut adv = Scripted::new(|_| {});
    adv.strong = true;
    let cfg = config(3, 1, NetworkMode::Sync, false);
    let nodes = (0..3).map(|_| Box::new(Chatter { rounds: vec![], log: vec![] }) as Box<dyn NodeLogic>).collect();
    let fm = FMine::new(0, DifficultyMap::warmup(), true);
    assert!(matches!(World::new(cfg, nodes, fm, Box::new(adv)), Err(SimError::CapabilityDisabled)));
}

#[test]
fn earlier_round_envelopes_cannot_be_retracted() {
    let seen = Arc::new(Mutex::new(None));
    let sink = seen.clone();
    let mut adv = Scripted::new(move |ctl| {
        if ctl.round() == RoundIndex(3) {
            // Node 0's round-2 envelope to node 1 is still in flight (Δ = 3).
            let rec = ctl.history().iter().find(|r| r.round == RoundIndex(2) && r.sender == NodeId(0)).unwrap();
            let id = rec.envelope_to(NodeId(1)).unwrap();
            ctl.corrupt(NodeId(0)).unwrap();
            *sink.lock().unwrap() = Some(ctl.retract(id));
        }
    });
    adv.strong = true;
    let mut w = world(config(3, 1, NetworkMode::PartialSync { delta: 3 }, true), &[2], adv);
    for _ in 0..3 {
        w.step_round().unwrap();
    }
    let got = seen.lock().unwrap().clone().unwrap();
    assert!(matches!(got, Err(SimError::WrongRound { sent: RoundIndex(2), corrupted: Some(RoundIndex(3)), .. })));
}

#[test]
fn round_cap_is_reported() {
    let mut cfg = config(2, 0, NetworkMode::Sync, false);
    cfg.max_rounds = 3;
    let mut w = world(cfg, &[], Scripted::new(|_| {}));
    for _ in 0..3 {
        w.step_round().unwrap();
    }
    assert_eq!(w.step_round(), Err(SimError::MaxRoundsExceeded(3)));
    assert_eq!(w.run(), Ok(RunStatus::RoundLimit));
}

#[test]
fn empty_rounds_just_advance() {
    let mut w = world(config(3, 0, NetworkMode::Sync, false), &[], Scripted::new(|_| {}));
    assert_eq!(w.step_round(), Ok(RoundIndex(1)));
    assert_eq!(w.round(), RoundIndex(2));
    assert!(log_of(&w, 0)[0].1.is_empty());
}

fn random_world(seed: u64, delta: u32) -> World {
    let mut adv = Scripted::new(|_| {});
    let mut rng = crate::rng::adversary_stream(seed);
    adv.delay = Box::new(move |_, d| rand::Rng::gen_range(&mut rng, 1..=d));
    let mut cfg = config(5, 1, NetworkMode::PartialSync { delta }, false);
    cfg.seed = seed;
    world(cfg, &[1, 2, 3, 5, 8], adv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn deliveries_stay_within_delta(seed in any::<u64>(), delta in 1u32..6) {
        let mut w = random_world(seed, delta);
        for _ in 0..15 {
            w.step_round().unwrap();
        }
        let events = w.trace().unwrap().events();
        for e in events {
            if let TraceEvent::Send { round, deliver_round, .. } = e {
                let d = deliver_round.0 - round.0;
                prop_assert!((1..=delta).contains(&d));
            }
        }
        let sent = events.iter().filter(|e| matches!(e, TraceEvent::Send { .. })).count();
        let delivered = events.iter().filter(|e| matches!(e, TraceEvent::Deliver { .. })).count();
        let late = events.iter().filter(|e| matches!(e, TraceEvent::Send { deliver_round, .. } if deliver_round.0 > 15)).count();
        prop_assert_eq!(sent, delivered + late);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let run = |seed| {
            let mut w = random_world(seed, 4);
            for _ in 0..12 {
                w.step_round().unwrap();
            }
            let mut buf = Vec::new();
            w.trace().unwrap().write_jsonl(&mut buf).unwrap();
            (buf, w.inbox_digests().unwrap().to_vec())
        };
        prop_assert_eq!(run(seed), run(seed));
    }
}
