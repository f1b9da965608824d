//! Deterministic per-replica random streams.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"rwsre.stream.v1";

/// Seed for the stream of `(master_seed, scenario, n, replica)`; a SHA-256 of the tuple.
pub fn derive_stream(master_seed: u64, scenario: &str, n: u64, replica: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master_seed.to_le_bytes());
    h.update((scenario.len() as u64).to_le_bytes());
    h.update(scenario.as_bytes());
    h.update(n.to_le_bytes());
    h.update(replica.to_le_bytes());
    h.finalize().into()
}

pub fn stream_rng(master_seed: u64, scenario: &str, n: u64, replica: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::from_seed(derive_stream(master_seed, scenario, n, replica))
}

/// 64-bit environment seed for the same tuple.
pub fn env_seed(master_seed: u64, scenario: &str, n: u64, replica: u64) -> u64 {
    let d = derive_stream(master_seed, scenario, n, replica);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
