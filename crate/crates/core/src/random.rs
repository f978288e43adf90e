//! Randomness streams and the primitive variates everything else is built on.
//!
//! Every Monte Carlo loop derives one independent stream per work item from
//! `(seed, tag, index)`, so results do not depend on how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for work item `index` of the computation labelled
/// `tag` under master `seed`.
pub fn stream(seed: u64, tag: u64, index: u64) -> Stream {
    let mut state = seed ^ tag.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A fresh stream seeded from a single `u64`.
pub fn seeded(seed: u64) -> Stream {
    stream(seed, 0, 0)
}

/// Uniform on `(0, 1]`, safe to take the logarithm of.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard normal variate (Box–Muller, one output per call).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_unit(rng);
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Exponential variate with mean `scale`.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    -scale * libm::log(open_unit(rng))
}

/// Gamma variate with integer shape `k` and the given scale, as a sum of
/// `k` exponentials.
pub fn gamma_integer<R: Rng + ?Sized>(rng: &mut R, k: usize, scale: f64) -> f64 {
    (0..k).map(|_| exponential(rng, scale)).sum()
}

/// Fills `out` with a direction drawn uniformly from the unit sphere.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut ss = 0.0;
        for v in out.iter_mut() {
            *v = standard_normal(rng);
            ss += *v * *v;
        }
        if ss > 0.0 {
            let inv = 1.0 / libm::sqrt(ss);
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}
