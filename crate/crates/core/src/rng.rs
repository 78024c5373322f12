//! Seeded randomness streams.
//!
//! Every consumer (a node, the mining functionality, the adversary) draws from
//! its own ChaCha stream whose key is derived from `(seed, consumer tag)`, so
//! adding or reordering consumers never perturbs anybody else's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 32-byte key from the run seed, a domain label and arbitrary
/// context bytes.
pub fn derive_key(seed: u64, domain: &str, context: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((domain.len() as u32).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(context);
    h.finalize().into()
}

pub fn stream(seed: u64, domain: &str, context: &[u8]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(seed, domain, context))
}

/// Private stream of node `index`.
pub fn node_stream(seed: u64, index: u32) -> ChaCha8Rng {
    stream(seed, "node", &index.to_le_bytes())
}

pub fn adversary_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, "adversary", &[])
}

/// Stream used by the harness to draw per-node inputs.
pub fn input_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, "inputs", &[])
}
