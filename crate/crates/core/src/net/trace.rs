//! Append-only event log, exported as JSON Lines.

use std::io::{self, Write};

use serde::Serialize;

use crate::message::{MessageSummary, MineTag};
use crate::types::{Bit, NodeId, RoundIndex};

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Multicast {
        round: RoundIndex,
        sender: NodeId,
        honest: bool,
        message: MessageSummary,
        recipients: usize,
        first_envelope: u64,
    },
    Send {
        round: RoundIndex,
        envelope: u64,
        sender: NodeId,
        recipient: NodeId,
        deliver_round: RoundIndex,
    },
    Deliver { round: RoundIndex, envelope: u64, recipient: NodeId },
    Corrupt { round: RoundIndex, node: NodeId },
    Retract { round: RoundIndex, envelope: u64 },
    Coin { round: RoundIndex, node: NodeId, tag: MineTag, success: bool },
    Output { round: RoundIndex, node: NodeId, bit: Bit },
}

#[derive(Clone, Debug, Default)]
pub struct TraceLog {
    events: Vec<TraceEvent>,
}

impl TraceLog {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Honest multicast count recomputed from the log alone.
    pub fn honest_multicasts(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Multicast { honest: true, .. }))
            .count() as u64
    }
}
