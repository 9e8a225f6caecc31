//! Deterministic random-stream derivation.
//!
//! Every random decision in a chain is drawn from its own short-lived
//! generator keyed by `(seed, sweep, role, unit)` — e.g. one stream per
//! observation for the augmentation draws, one per student for the deviation
//! trajectory. Results are therefore a pure function of the seed: parallel
//! execution order, worker count, and batch size cannot change a single bit
//! of the output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles, kept distinct so that (for example) observation 3's
/// augmentation stream never collides with student 3's trajectory stream.
pub(crate) mod role {
    pub const OMEGA: u64 = 1;
    pub const MU: u64 = 2;
    pub const BETA: u64 = 3;
    pub const INNOVATION: u64 = 4;
    pub const INITIAL: u64 = 5;
    pub const SIM: u64 = 6;
    pub const REPLICATION: u64 = 7;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a fast 64-bit avalanche.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(h: u64, v: u64) -> u64 {
    mix(h ^ v.wrapping_mul(GOLDEN))
}

/// A fresh generator for one unit of work inside one sweep.
pub(crate) fn substream(seed: u64, sweep: u64, role: u64, unit: u64) -> ChaCha8Rng {
    let h = absorb(absorb(absorb(mix(seed), sweep), role), unit);
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_exact_mut(8) {
        s = s.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix(s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// A derived 64-bit seed, for handing a whole child task (a replication, a
/// per-model fit) its own independent seed.
pub(crate) fn derive_seed(seed: u64, role: u64, unit: u64) -> u64 {
    absorb(absorb(mix(seed), role), unit)
}
