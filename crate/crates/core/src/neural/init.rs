//! Seeded random streams and weight initializers.
//!
//! Each parameter group draws from its own named stream derived from the run
//! seed, so adding or removing one group leaves the others untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{cast, Float, Tensor};

pub type StreamRng = ChaCha8Rng;

pub const STREAM_ENCODER: &str = "encoder";
pub const STREAM_SPAN_HEAD: &str = "span_head";
pub const STREAM_LEVEL_HEAD: &str = "level_head";
pub const STREAM_DROPOUT: &str = "dropout";
pub const STREAM_SHUFFLE: &str = "shuffle";
pub const STREAM_NEGATIVES: &str = "negatives";

/// FNV-1a, stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, name: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ stable_hash(name.as_bytes())))
}

/// Glorot/Xavier uniform for a `fan_in × fan_out` matrix.
pub fn xavier_uniform<F: Float, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| cast(rng.random_range(-limit..limit)))
        .collect();
    Tensor {
        shape: vec![fan_in, fan_out],
        data,
    }
}

pub fn normal<F: Float, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<F> {
    let dist = Normal::new(0.0, std).expect("valid std");
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| cast(dist.sample(rng))).collect(),
    }
}
