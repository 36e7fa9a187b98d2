//! Deterministic random streams used across the crate.
//!
//! Every stochastic step (weight init, batch shuffling, data synthesis,
//! OOD perturbations) draws from its own ChaCha stream so that a single
//! user-facing seed fixes all results bit-exactly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math;

/// Substream tags; keeps independently seeded purposes decorrelated.
pub(crate) const TAG_INIT: u64 = 0x01;
pub(crate) const TAG_SHUFFLE: u64 = 0x02;
pub(crate) const TAG_SYNTH: u64 = 0x03;
pub(crate) const TAG_OOD: u64 = 0x04;

pub(crate) fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw via Box-Muller.
pub(crate) fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1], keeps ln finite
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}
