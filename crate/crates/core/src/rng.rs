//! Counter-based random streams.
//!
//! Every consumer of randomness asks for a stream by `(root seed, name, index)`.
//! Streams never share state, so any iteration can be recomputed in isolation,
//! which is what makes exact resume possible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const DOMAIN: &str = "domain";
pub const INIT: &str = "init";
pub const TRAIN: &str = "train";
pub const INSTRUCTIONS: &str = "instructions";
pub const EVO: &str = "evo";
pub const ORACLE: &str = "oracle";

pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// A uniform draw in `[0, 1)` that is a pure function of `seed` and `parts`.
pub fn keyed_unit(seed: u64, parts: &[&[u8]]) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}
