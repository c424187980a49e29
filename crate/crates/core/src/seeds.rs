//! Deterministic sub-seed derivation.
//!
//! `sub_seed(seed, label) = seed + u64_le(sha256(label)[..8])` (wrapping), so a
//! task's stream depends only on the global seed and its own label, never on
//! scheduling order.

use sha2::{Digest, Sha256};

pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed.wrapping_add(u64::from_le_bytes(head))
}
