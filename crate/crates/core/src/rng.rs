//! Seeded, counter-addressed random streams.
//!
//! Every draw is a pure function of `(seed, index)`: stream `index` of a
//! ChaCha8 generator keyed by `seed`. Normal variates use the inverse normal
//! CDF applied to an open-interval uniform, so results do not depend on the
//! rejection behaviour of any sampler.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

/// Generator for stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform variate on the open interval (0, 1).
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate, `Φ⁻¹(u) = -√2 · erfc⁻¹(2u)`.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u = open_uniform(rng);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

pub fn fill_normals<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = standard_normal(rng);
    }
}
