//! Per-trial random streams.
//!
//! Every trial draws from its own xoshiro256++ generator. The generator state
//! is derived from `(master_seed, trial_index)` by
//!
//! ```text
//! key   = mix64(master_seed ^ mix64(trial_index + 0x9E3779B97F4A7C15))
//! state = four successive SplitMix64 outputs seeded with key
//! ```
//!
//! where `mix64` is the SplitMix64 output finalizer. Streams are random-access
//! in the trial index, so trials can run in any order or on any thread.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

/// Identifier recorded in every output for provenance.
pub const PRNG_ID: &str = "xoshiro256++ (splitmix64 stream key, v1)";

pub type TrialRng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    pub fn stream_key(&self) -> u64 {
        mix64(self.master_seed ^ mix64(self.trial_index.wrapping_add(GOLDEN_GAMMA)))
    }

    pub fn rng(&self) -> TrialRng {
        // seed_from_u64 expands the key with SplitMix64.
        Xoshiro256PlusPlus::seed_from_u64(self.stream_key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use rand_xoshiro::SplitMix64;

    #[test]
    fn splitmix64_reference_vector() {
        // Published outputs of the reference splitmix64.c for seed 1234567.
        let mut g = SplitMix64::seed_from_u64(1234567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(g.next_u64(), e);
        }
    }

    #[test]
    fn xoshiro256pp_reference_vector() {
        // Reference xoshiro256plusplus.c with state {1, 2, 3, 4}.
        let mut seed = [0u8; 32];
        for (i, w) in [1u64, 2, 3, 4].iter().enumerate() {
            seed[i * 8..i * 8 + 8].copy_from_slice(&w.to_le_bytes());
        }
        let mut g = Xoshiro256PlusPlus::from_seed(seed);
        let expected = [
            41943041u64,
            58720359,
            3588806011781223,
            3591011842654386,
            9228616714210784205,
            9973669472204895162,
            14011001112246962877,
            12406186145184390807,
            15849039046786891736,
            10450023813501588000,
        ];
        for e in expected {
            assert_eq!(g.next_u64(), e);
        }
    }

    #[test]
    fn stream_keys_are_pinned() {
        // Frozen regression values for the stream derivation.
        assert_eq!(SeedSpec::new(0, 0).stream_key(), mix64(mix64(GOLDEN_GAMMA)));
        let first: Vec<u64> = (0..3).map(|t| SeedSpec::new(42, t).rng().next_u64()).collect();
        assert_eq!(first, STREAM_VECTOR_42);
    }

    const STREAM_VECTOR_42: [u64; 3] = [17029008609358826831, 16023411660092600078, 11480926643349370086];

    #[test]
    fn streams_differ_across_trials_and_seeds() {
        let a = SeedSpec::new(7, 0).rng().next_u64();
        let b = SeedSpec::new(7, 1).rng().next_u64();
        let c = SeedSpec::new(8, 0).rng().next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, SeedSpec::new(7, 0).rng().next_u64());
    }
}
