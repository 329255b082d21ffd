//! Adversarial training with Voronoi constraints, plus the geometric toolkit
//! used to analyse it: synthetic class manifolds embedded at arbitrary
//! codimension, δ-cover measurement, tubular-neighborhood sampling, covering
//! and volume bounds, exact nearest-neighbor certification, a one-hidden-layer
//! ReLU network with exact gradients, norm-ball and Voronoi-constrained
//! attacks, training loops and robustness curves.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel orchestration live in the `voradv` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attacks;
mod error;
pub mod eval;
pub mod geometry;
mod kdtree;
pub mod linalg;
pub mod net;
pub mod optim;
pub mod rng;
pub mod training;
pub mod voronoi;

pub use error::{Error, Result};
pub use linalg::{Norm, PointCloud};
