//! Seed derivation: one master seed expands into independent per-stage and
//! per-worker streams.

use sha2::{Digest, Sha256};

/// Per-stage seed: the first eight bytes (little endian) of
/// `SHA-256("<master>:<stage>")`.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{master}:{stage}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed for the `index`-th parallel worker (tree, class) of a stage; SplitMix64
/// finalizer over `seed + index`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
