//! Seeded random streams.
//!
//! Every randomized stage draws from ChaCha8 (the 8-round ChaCha stream
//! cipher used as a counter-based generator). A stream is addressed by
//! `(seed, purpose, index)`:
//!
//! - key bytes 0..8 hold `seed` little-endian, bytes 8..16 hold the purpose
//!   tag little-endian, bytes 16..32 are zero;
//! - the 64-bit ChaCha stream id is `index`;
//! - the block counter starts at zero.
//!
//! Primitive draws are defined on top of the raw 32/64-bit outputs so that
//! another implementation of ChaCha8 reproduces them bit-for-bit:
//!
//! - spin: `+1` if the top bit of the next `u32` is clear, else `-1`;
//! - unit float: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! - normal: Box-Muller cosine branch from two unit floats `u1, u2`,
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags that keep independent stages on disjoint keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Couplings = 1,
    CdmaCode = 2,
    CdmaBits = 3,
    CdmaNoise = 4,
    Anneal = 5,
    Equilibrium = 6,
    MapRandom = 7,
    MapMajority = 8,
    DescentOrder = 9,
    CliqueLayout = 10,
    Bootstrap = 11,
    RandomStates = 12,
    Cell = 13,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A child seed: the first `u64` of stream `(seed, purpose, index)`.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    stream(seed, purpose, index).next_u64()
}

#[inline]
pub fn spin(rng: &mut impl RngCore) -> i8 {
    if rng.next_u32() >> 31 == 0 {
        1
    } else {
        -1
    }
}

#[inline]
pub fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn normal(rng: &mut impl RngCore) -> f64 {
    let u1 = unit(rng);
    let u2 = unit(rng);
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
