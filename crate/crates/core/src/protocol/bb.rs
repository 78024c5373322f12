//! Broadcast front end: a designated sender multicasts its bit in round 1;
//! from round 2 every node runs agreement on the bit it received (0 when it
//! received none or conflicting bits).

use super::ProtocolParams;
use crate::message::Message;
use crate::net::{Delivery, NodeContext, NodeLogic};
use crate::types::{Bit, NodeId, RoundIndex};

pub struct BroadcastFrontEnd {
    params: ProtocolParams,
    id: NodeId,
    sender: NodeId,
    /// The sender's own bit; `None` for everyone else.
    sender_input: Option<Bit>,
    received: Option<Bit>,
    inner: Option<Box<dyn NodeLogic>>,
}

impl BroadcastFrontEnd {
    pub fn new(params: ProtocolParams, id: NodeId, sender: NodeId, sender_input: Bit) -> Self {
        BroadcastFrontEnd {
            params,
            id,
            sender,
            sender_input: (id == sender).then_some(sender_input),
            received: None,
            inner: None,
        }
    }

    /// The bit this node fed into agreement, once known.
    pub fn received(&self) -> Option<Bit> {
        self.received
    }

    pub fn inner(&self) -> Option<&dyn NodeLogic> {
        self.inner.as_deref()
    }
}

impl NodeLogic for BroadcastFrontEnd {
    fn on_round(&mut self, inbox: &[Delivery], ctx: &mut NodeContext<'_>) {
        if let Some(inner) = self.inner.as_mut() {
            inner.on_round(inbox, ctx);
            return;
        }
        if ctx.round() == RoundIndex(1) {
            if let Some(bit) = self.sender_input {
                ctx.multicast(Message::BroadcastInput(bit));
            }
            return;
        }
        let mut bits = inbox.iter().filter(|d| d.sender == self.sender).filter_map(|d| match &*d.payload {
            Message::BroadcastInput(b) => Some(*b),
            _ => None,
        });
        let first = bits.next();
        let bit = match first {
            Some(b) if bits.all(|o| o == b) => b,
            _ => Bit::Zero,
        };
        self.received = Some(bit);
        let mut inner = self.params.node(self.id, bit, ctx.round());
        inner.on_round(inbox, ctx);
        self.inner = Some(inner);
    }

    fn output(&self) -> Option<Bit> {
        self.inner.as_ref().and_then(|i| i.output())
    }

    fn is_halted(&self) -> bool {
        self.inner.as_ref().is_some_and(|i| i.is_halted())
    }

    fn iteration(&self) -> u32 {
        self.inner.as_ref().map_or(0, |i| i.iteration())
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
