//! Seed derivation and counter-based mixing.
//!
//! Every random quantity in the crate is a pure function of a master seed and
//! a small tuple of integer coordinates, so replicas can be evaluated in any
//! order (or in parallel) and still reproduce bit-for-bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the seeds of unrelated consumers apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Field = 0x66_6965_6c64,
    Path = 0x7061_7468,
    Tilt = 0x7469_6c74,
    Walk = 0x7761_6c6b,
    Extremes = 0x6578_7472,
    Uniforms = 0x756e_6966,
    Geometric = 0x6765_6f6d,
}

/// The SplitMix64 finalizer.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of `(seed, a, b)`; each coordinate passes through a full mixing round.
#[inline]
pub fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
}

/// Seed for replica `index` of the given stream.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    mix3(master, stream as u64, index)
}

pub fn replica_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Maps 64 random bits to a double in the open interval (0, 1).
#[inline]
pub fn bits_to_open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline]
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    bits_to_open_unit(rng.next_u64())
}
