//! Dense vector helpers, the ℓp norms used throughout, and a flat point
//! container.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};

/// The two norms supported everywhere: Euclidean and max-coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L2,
    LInf,
}

impl Norm {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => libm::sqrt(dot(v, v)),
            Norm::LInf => v.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
        }
    }

    /// Monotone surrogate of the distance: squared distance for ℓ2, the
    /// distance itself for ℓ∞. All comparisons and tie-breaks go through this
    /// so every search path orders candidates identically.
    #[inline]
    pub fn cmp_distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L2 => sq_dist(a, b),
            Norm::LInf => a
                .iter()
                .zip(b)
                .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs())),
        }
    }

    #[inline]
    pub fn from_cmp(self, c: f64) -> f64 {
        match self {
            Norm::L2 => libm::sqrt(c),
            Norm::LInf => c,
        }
    }

    #[inline]
    pub fn to_cmp(self, distance: f64) -> f64 {
        match self {
            Norm::L2 => distance * distance,
            Norm::LInf => distance,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.from_cmp(self.cmp_distance(a, b))
    }

    /// Steepest-ascent direction of unit dual size: `sign(g)` for ℓ∞ and
    /// `g / ‖g‖₂` for ℓ2. Returns `None` for a zero gradient.
    pub fn ascent_direction(self, grad: &[f64]) -> Option<Vec<f64>> {
        match self {
            Norm::LInf => {
                if grad.iter().all(|&g| g == 0.0) {
                    return None;
                }
                Some(grad.iter().map(|&g| sign(g)).collect())
            }
            Norm::L2 => {
                let n = libm::sqrt(dot(grad, grad));
                if n == 0.0 || !n.is_finite() {
                    return None;
                }
                Some(grad.iter().map(|&g| g / n).collect())
            }
        }
    }

    /// Projects `point` in place onto the closed ball of radius `radius`
    /// around `center`: coordinate clipping for ℓ∞, radial rescaling for ℓ2.
    pub fn project_onto_ball(self, center: &[f64], point: &mut [f64], radius: f64) {
        match self {
            Norm::LInf => {
                for (p, &c) in point.iter_mut().zip(center) {
                    *p = p.clamp(c - radius, c + radius);
                }
            }
            Norm::L2 => {
                let r = libm::sqrt(sq_dist(point, center));
                if r <= radius {
                    return;
                }
                if radius == 0.0 {
                    point.copy_from_slice(center);
                    return;
                }
                let scale = radius / r;
                for (p, &c) in point.iter_mut().zip(center) {
                    *p = c + (*p - c) * scale;
                }
            }
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L2 => "l2",
            Norm::LInf => "linf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "l_inf" | "infinity" => Ok(Norm::LInf),
            other => Err(Error::invalid(alloc::format!("unknown norm `{other}`"))),
        }
    }
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Dot product with independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let t = x[i] - y[i];
            acc[i] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Points of a fixed dimension stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        PointCloud { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        PointCloud { dim, data: Vec::with_capacity(dim * n) }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid("flat buffer length is not a multiple of the dimension"));
        }
        Ok(PointCloud { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut pc = PointCloud::with_capacity(dim, rows.len());
        for r in rows {
            pc.push(r.as_ref())?;
        }
        Ok(pc)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.dim, p.len())?;
        self.data.extend_from_slice(p);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }
}
