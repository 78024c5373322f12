//! Simulation library for subquadratic Byzantine agreement with bit-specific
//! committee election.
//!
//! The crate is layered bottom-up: [`net`] is a round-lockstep network with an
//! adaptive adversary, [`fmine`] the ideal committee-election functionality,
//! [`protocol`] the three agreement protocols plus the broadcast front end,
//! [`adversary`] the attack strategies and [`harness`] the Monte Carlo driver.

pub mod adversary;
pub mod fmine;
pub mod harness;
pub mod message;
pub mod net;
pub mod protocol;
pub mod rng;
pub mod types;

pub use types::{Bit, NodeId, RoundIndex};
