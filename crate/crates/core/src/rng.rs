//! Counter-based seeding.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by
//! `(run seed, domain, index)`, so any piece of randomness (the noise of one
//! NAP stage, the batch of one optimizer step) can be regenerated without
//! replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes a random stream can serve within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Sbm = 1,
    Split = 2,
    DegreeBound = 3,
    Init = 4,
    NapNoise = 5,
    BatchSampling = 6,
    GradientNoise = 7,
    Bootstrap = 8,
}

pub fn keyed_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
