//! Deterministic derivation of per-task RNG seeds from one run seed.
//!
//! Every random stream in a run (cache entries, opponent selection, policy
//! sampling, judge draws, experiment repetitions) gets its own ChaCha
//! generator seeded by mixing the run seed with a stream tag and structured
//! indices. Streams therefore stay independent of iteration order and of
//! each other, and a run replays bit-identically from its seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; full-avalanche mix of one 64-bit word.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes; stable across platforms and releases, unlike the
/// standard library's default hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from the run seed, a stream tag, and indices.
pub fn derive_seed(run_seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = mix64(run_seed);
    h = mix64(h ^ fnv1a(tag.as_bytes()));
    for &i in indices {
        h = mix64(h ^ i);
    }
    h
}

/// Like [`derive_seed`] but keyed by strings (cache entries, judge calls
/// addressed by prompt and opponent id).
pub fn derive_seed_keyed(run_seed: u64, tag: &str, keys: &[&str], indices: &[u64]) -> u64 {
    let mut h = mix64(run_seed);
    h = mix64(h ^ fnv1a(tag.as_bytes()));
    for key in keys {
        h = mix64(h ^ fnv1a(key.as_bytes()));
    }
    for &i in indices {
        h = mix64(h ^ i);
    }
    h
}

/// ChaCha12 generator for a derived seed. The concrete generator is pinned
/// (rather than `StdRng`) so stream identity survives `rand` upgrades.
pub fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
