//! Seeded randomness. Every consumer draws from a named substream of a single
//! root seed, so datasets, initialization, attacks and Monte Carlo runs are
//! reproducible independently of one another.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{dot, Norm};

pub type Stream = ChaCha8Rng;

pub const DATASET: &str = "dataset";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const ATTACK: &str = "attack";
pub const MC: &str = "mc";

/// FNV-1a, used only to turn stream names into ChaCha stream ids.
fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn substream(seed: u64, name: &str) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform direction on the ℓ2 unit sphere.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, dim);
        let n = libm::sqrt(dot(&v, &v));
        if n > 1e-300 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Uniform sample from the closed ℓp ball of the given radius at the origin.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64, norm: Norm) -> Vec<f64> {
    match norm {
        Norm::L2 => {
            let mut v = unit_direction(rng, dim);
            let u: f64 = rng.random();
            let r = radius * libm::pow(u, 1.0 / dim as f64);
            v.iter_mut().for_each(|x| *x *= r);
            v
        }
        Norm::LInf => (0..dim).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect(),
    }
}

/// Uniform sample from the ℓp sphere (ball boundary) of the given radius.
pub fn uniform_on_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64, norm: Norm) -> Vec<f64> {
    match norm {
        Norm::L2 => {
            let mut v = unit_direction(rng, dim);
            v.iter_mut().for_each(|x| *x *= radius);
            v
        }
        Norm::LInf => {
            // Every face of the cube has the same area.
            let mut v: Vec<f64> = (0..dim).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let face = rng.random_range(0..dim);
            v[face] = if rng.random::<bool>() { radius } else { -radius };
            v
        }
    }
}
