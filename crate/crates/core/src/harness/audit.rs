//! Trace audits run on every finished world.
//!
//! Each audit is a counter; most are expected to stay at zero and flag the
//! low-probability events the protocols' security rests on.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::message::{Message, MineTag, MsgType};
use crate::net::{NodeLogic, World};
use crate::protocol::{BroadcastFrontEnd, Mode, ProtocolKind, ProtocolParams, PsyncNode, StepClock, Sync12Node, Sync13Node};
use crate::types::{Bit, NodeId, RoundIndex};

/// One Propose step in committee mode, for the good-iteration statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProposeSample {
    pub iteration: u32,
    pub round: RoundIndex,
    /// Honest Propose mining attempts.
    pub n_h: u32,
    /// Nodes already corrupt before the step.
    pub n_c: u32,
    pub honest_successes: u32,
    /// Some corrupt node would succeed for at least one bit.
    pub corrupt_success: bool,
    /// Bit of the honest success, when there is exactly one.
    pub leader_bit: Option<Bit>,
}

impl ProposeSample {
    pub fn good(&self) -> bool {
        self.honest_successes == 1 && !self.corrupt_success
    }

    /// Probability of a good step when each attempt succeeds with 1/n and
    /// every corrupt node gets one attempt per bit.
    pub fn good_probability(&self, n: u32) -> f64 {
        let q = 1.0 / n as f64;
        self.n_h as f64 * q * (1.0 - q).powi(self.n_h as i32 - 1 + 2 * self.n_c as i32)
    }
}

pub struct AuditResult {
    pub counters: BTreeMap<String, u64>,
    pub samples: Vec<ProposeSample>,
}

/// Counter names reported for a protocol, so every row of an experiment has
/// the same columns.
pub fn counter_names(kind: ProtocolKind) -> Vec<&'static str> {
    let mut names = vec!["corrupt_quorum", "double_cert", "good_iterations", "propose_iterations"];
    match kind {
        ProtocolKind::Sync13 => names.push("persistence_violation"),
        ProtocolKind::Sync12 => {
            names.extend(["lemma1", "lemma1_eventual", "post_output_cert", "relay_miss", "relay_violation"])
        }
        ProtocolKind::Psync13 => {
            names.extend(["corrupt_input_cert", "late_termination", "post_output_cert", "step_clock_mismatch"])
        }
    }
    names.sort_unstable();
    names
}

/// Unwraps the broadcast front end, if any.
pub fn protocol_node(node: &dyn NodeLogic) -> Option<&dyn Any> {
    match node.as_any().downcast_ref::<BroadcastFrontEnd>() {
        Some(bb) => bb.inner().map(|i| i.as_any()),
        None => Some(node.as_any()),
    }
}

struct Ctx<'a> {
    world: &'a World,
    params: ProtocolParams,
    start: RoundIndex,
    delta: Option<u32>,
}

pub fn audit(world: &World, params: ProtocolParams, start: RoundIndex) -> AuditResult {
    let cx = Ctx { world, params, start, delta: world.config().mode.delta() };
    let mut counters: BTreeMap<String, u64> = counter_names(params.kind).into_iter().map(|k| (k.to_string(), 0)).collect();
    let mut set = |k: &str, v: u64| {
        counters.insert(k.to_string(), v);
    };

    let votes = vote_ledger(world);
    let need = params.cert_threshold() as usize;
    let double = votes.all.keys().filter(|(r, b)| *b == Bit::Zero && votes.count(*r, Bit::One) >= need && votes.count(*r, Bit::Zero) >= need).count();
    set("double_cert", double as u64);
    set("corrupt_quorum", votes.corrupt.values().filter(|s| s.len() >= need).count() as u64);

    let samples = if params.mode == Mode::Committee { propose_samples(world, params.kind) } else { Vec::new() };
    set("propose_iterations", samples.len() as u64);
    set("good_iterations", samples.iter().filter(|s| s.good()).count() as u64);

    match params.kind {
        ProtocolKind::Sync13 => set("persistence_violation", persistence(&cx, &samples)),
        ProtocolKind::Sync12 => {
            let (strict, eventual) = lemma1(world, params.lambda.div_ceil(2) as usize);
            set("lemma1", strict);
            set("lemma1_eventual", eventual);
            set("post_output_cert", post_output_cert(&cx, &votes));
            let (miss, violation) = relay(&cx);
            set("relay_miss", miss);
            set("relay_violation", violation);
        }
        ProtocolKind::Psync13 => {
            set("corrupt_input_cert", corrupt_input_cert(world, params.input_threshold() as usize));
            set("post_output_cert", post_output_cert(&cx, &votes));
            set("late_termination", late_termination(&cx, &samples));
            set("step_clock_mismatch", step_clock_mismatch(&cx));
        }
    }
    for (k, v) in world.adversary().counters() {
        set(k, v);
    }
    AuditResult { counters, samples }
}

/// Every eligible vote ever sent, by (iteration, bit).
struct VoteLedger {
    all: HashMap<(u32, Bit), BTreeSet<NodeId>>,
    /// Only those sent by already-corrupt nodes.
    corrupt: HashMap<(u32, Bit), BTreeSet<NodeId>>,
}

impl VoteLedger {
    fn count(&self, r: u32, b: Bit) -> usize {
        self.all.get(&(r, b)).map_or(0, BTreeSet::len)
    }
}

fn vote_ledger(world: &World) -> VoteLedger {
    let mut all: HashMap<(u32, Bit), BTreeSet<NodeId>> = HashMap::new();
    let mut corrupt: HashMap<(u32, Bit), BTreeSet<NodeId>> = HashMap::new();
    for rec in world.sent_log() {
        if let Message::Vote { iteration, bit, .. } = &*rec.payload {
            if world.fmine().verify(MineTag::vote(*iteration, *bit), rec.sender) {
                all.entry((*iteration, *bit)).or_default().insert(rec.sender);
                if !rec.honest {
                    corrupt.entry((*iteration, *bit)).or_default().insert(rec.sender);
                }
            }
        }
    }
    VoteLedger { all, corrupt }
}

fn propose_samples(world: &World, kind: ProtocolKind) -> Vec<ProposeSample> {
    let mut by_iteration: BTreeMap<u32, (RoundIndex, BTreeSet<NodeId>, Vec<(NodeId, Bit)>)> = BTreeMap::new();
    for a in world.mining_attempts().iter().filter(|a| a.honest && a.tag.kind == MsgType::Propose) {
        let e = by_iteration.entry(a.tag.iteration).or_insert((a.round, BTreeSet::new(), Vec::new()));
        e.0 = e.0.min(a.round);
        e.1.insert(a.node);
        if a.success {
            e.2.push((a.node, a.tag.bit.expect("proposals carry a bit")));
        }
    }
    let ledger = world.ledger();
    by_iteration
        .into_iter()
        .filter(|(r, _)| kind != ProtocolKind::Sync12 || *r >= 2)
        .map(|(r, (round, attempted, wins))| {
            let corrupt: Vec<NodeId> = ledger.iter().filter(|(_, at)| *at < round).map(|(id, _)| id).collect();
            let corrupt_success = corrupt
                .iter()
                .any(|c| Bit::BOTH.iter().any(|b| world.fmine().hypothetical(*c, MineTag::propose(r, *b))));
            ProposeSample {
                iteration: r,
                round,
                n_h: attempted.len() as u32,
                n_c: corrupt.len() as u32,
                honest_successes: wins.len() as u32,
                corrupt_success,
                leader_bit: (wins.len() == 1).then(|| wins[0].1),
            }
        })
        .collect()
}

fn forever_honest(world: &World) -> impl Iterator<Item = NodeId> + '_ {
    (0..world.n()).map(NodeId).filter(|id| world.ledger().forever_honest(*id))
}

/// After the first good iteration whose leader agrees with every sticky
/// honest belief, forever-honest nodes should agree from then on.
fn persistence(cx: &Ctx<'_>, samples: &[ProposeSample]) -> u64 {
    let honest: Vec<&Sync13Node> = forever_honest(cx.world)
        .filter_map(|id| protocol_node(cx.world.node(id)).and_then(|a| a.downcast_ref::<Sync13Node>()))
        .collect();
    let after = |node: &Sync13Node, r: u32| node.records().iter().find(|x| x.iteration == r).and_then(|x| x.after);
    // Iteration 1 starts sticky on the inputs, which no certificate backs.
    let Some(good) = samples.iter().find(|s| {
        s.iteration >= 2
            && s.good()
            && honest.iter().all(|node| match after(node, s.iteration - 1) {
                Some((b, true)) => Some(b) == s.leader_bit,
                _ => true,
            })
    }) else {
        return 0;
    };
    // Iterations from the good one onwards in which forever-honest nodes
    // disagree on their vote or on their belief after counting.
    let last = honest.iter().filter_map(|n| n.records().last().map(|x| x.iteration)).max().unwrap_or(0);
    (good.iteration..=last)
        .filter(|r| {
            let seen: BTreeSet<(Bit, Option<Bit>)> = honest
                .iter()
                .filter_map(|n| n.records().iter().find(|x| x.iteration == *r))
                .map(|x| (x.b_star, x.after.map(|(b, _)| b)))
                .collect();
            seen.len() > 1
        })
        .count() as u64
}

/// Tags for which at least `need` nodes sent while already corrupt
/// (`strict`), and for which at least `need` eventually-corrupt nodes hold a
/// successful coin (`eventual`).
fn lemma1(world: &World, need: usize) -> (u64, u64) {
    let fm = world.fmine();
    let mut strict: HashMap<MineTag, BTreeSet<NodeId>> = HashMap::new();
    for rec in world.sent_log().iter().filter(|r| !r.honest) {
        if let Some(tag) = rec.payload.tag() {
            if fm.verify(tag, rec.sender) {
                strict.entry(fm.canonical(tag)).or_default().insert(rec.sender);
            }
        }
    }
    let mut eventual: HashMap<MineTag, BTreeSet<NodeId>> = HashMap::new();
    for flip in fm.flips().iter().filter(|f| f.success && world.ledger().eventually_corrupt(f.node)) {
        eventual.entry(flip.tag).or_default().insert(flip.node);
    }
    let over = |m: &HashMap<MineTag, BTreeSet<NodeId>>| m.values().filter(|s| s.len() >= need).count() as u64;
    (over(&strict), over(&eventual))
}

fn decision_of(world: &World, id: NodeId) -> Option<(Bit, u32)> {
    let any = protocol_node(world.node(id))?;
    let d = any
        .downcast_ref::<Sync12Node>()
        .and_then(|n| n.decision())
        .or_else(|| any.downcast_ref::<PsyncNode>().and_then(|n| n.decision()))?;
    Some((d.bit, d.iteration))
}

/// Honest decisions on b from iteration r while some iteration ≥ r has a
/// vote quorum for 1 − b.
fn post_output_cert(cx: &Ctx<'_>, votes: &VoteLedger) -> u64 {
    let need = cx.params.cert_threshold() as usize;
    let decisions: BTreeSet<(Bit, u32)> = forever_honest(cx.world).filter_map(|id| decision_of(cx.world, id)).collect();
    decisions
        .iter()
        .filter(|(b, r)| votes.all.iter().any(|((it, vb), s)| *it >= *r && *vb == b.opposite() && s.len() >= need))
        .count() as u64
}

/// Once ⌈εn/2⌉ forever-honest nodes have output by round t, every node still
/// honest at t + 1 must have output by t + 1, unless none of those early
/// nodes won its Terminate coin (a relay miss).
fn relay(cx: &Ctx<'_>) -> (u64, u64) {
    let world = cx.world;
    let n = world.n();
    let f = world.ledger().budget();
    let eps = 0.5 - f as f64 / n as f64;
    let quorum = ((eps * n as f64 / 2.0).ceil() as usize).max(1);
    let mut done: Vec<(RoundIndex, NodeId, Bit)> = forever_honest(world)
        .filter_map(|id| world.outputs()[id.index()].map(|(b, r)| (r, id, b)))
        .collect();
    done.sort();
    if done.len() < quorum {
        return (0, 0);
    }
    let t = done[quorum - 1].0;
    let early = done.iter().take_while(|(r, _, _)| *r <= t);
    if !early.clone().any(|(_, id, b)| world.fmine().verify(MineTag::terminate(*b), *id)) {
        return (1, 0);
    }
    let late = (0..n).map(NodeId).any(|id| {
        world.ledger().so_far_honest(id, t.next()) && world.outputs()[id.index()].is_none_or(|(_, r)| r > t.next())
    });
    (0, u64::from(late))
}

/// Bits with at least `need` input messages from already-corrupt senders.
fn corrupt_input_cert(world: &World, need: usize) -> u64 {
    let mut senders: [BTreeSet<NodeId>; 2] = Default::default();
    for rec in world.sent_log().iter().filter(|r| !r.honest) {
        if let Message::Status { iteration: 1, bit: Some(b), .. } = &*rec.payload {
            if world.fmine().verify(MineTag::status(1, Some(*b)), rec.sender) {
                senders[b.as_index()].insert(rec.sender);
            }
        }
    }
    senders.iter().filter(|s| s.len() >= need).count() as u64
}

/// After the first good iteration whose steps outlast Δ, every
/// forever-honest node must output by the iteration's end plus Δ.
fn late_termination(cx: &Ctx<'_>, samples: &[ProposeSample]) -> u64 {
    let clock = StepClock::new(cx.params.iterations);
    let delta = cx.delta.unwrap_or(1);
    let Some(good) = samples.iter().find(|s| s.good() && clock.step_length(s.iteration) >= delta) else {
        return 0;
    };
    let end = cx.start.0 as u64 + clock.iteration_start(good.iteration + 1) - 2;
    let deadline = end + delta as u64;
    forever_honest(cx.world)
        .filter(|id| cx.world.outputs()[id.index()].is_none_or(|(_, r)| r.0 as u64 > deadline))
        .count() as u64
}

fn step_clock_mismatch(cx: &Ctx<'_>) -> u64 {
    let clock = StepClock::new(cx.params.iterations);
    let mut bad = 0;
    for id in (0..cx.world.n()).map(NodeId) {
        let Some(node) = protocol_node(cx.world.node(id)).and_then(|a| a.downcast_ref::<PsyncNode>()) else {
            continue;
        };
        for (r, round, len) in node.iteration_starts() {
            let expected = cx.start.0 as u64 + clock.iteration_start(*r) - 1;
            if *len != clock.step_length(*r) || round.0 as u64 != expected {
                bad += 1;
            }
        }
    }
    bad
}
