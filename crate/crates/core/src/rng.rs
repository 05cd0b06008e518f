//! Seeded random number generation helpers.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

/// The generator used everywhere a seed is accepted.
pub type WsRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> WsRng {
    WsRng::seed_from_u64(seed)
}

/// Independent stream derived from a base seed and a tag, e.g. a step index.
pub fn derived(seed: u64, tag: u64) -> WsRng {
    // splitmix64 finalizer to decorrelate nearby tags
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    WsRng::seed_from_u64(z ^ (z >> 31))
}

pub fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Glorot-style init for a `[out, in]` matrix.
pub fn xavier(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Tensor {
    let a = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
    uniform(&[out_dim, in_dim], -a, a, rng)
}
