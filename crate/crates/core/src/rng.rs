//! Seed derivation.
//!
//! Every random source in a run descends from one user seed. Subsystems get
//! their own stream by hashing a label together with that seed, so adding a
//! consumer never shifts the numbers another consumer sees. The generator is
//! ChaCha8, whose output is fixed by its published algorithm rather than by a
//! crate version.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First eight bytes (little endian) of `SHA-256(label || 0x00 || seed_le)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}
