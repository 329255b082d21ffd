//! Synthetic class manifolds, tubular neighborhoods and the covering/volume
//! quantities that describe how much of a tube a finite sample can certify.
//!
//! Two manifold families are provided, both with two classes and an ℓ2 reach
//! of 1 for the decision axis:
//!
//! * **Circles**: concentric circles of radius 1 and 3 in the x1–x2 plane,
//!   padded with zero coordinates.
//! * **Planes**: two axis-aligned squares `[-10, 10]²`, one at `x_d = 0` and
//!   one at `x_d = 2`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Norm, PointCloud};
use crate::rng::{self, uniform_in_ball, uniform_on_sphere};
use crate::voronoi::NeighborIndex;

/// Class ids are 1-based.
pub type ClassId = u32;

pub const CIRCLE_INNER_RADIUS: f64 = 1.0;
pub const CIRCLE_OUTER_RADIUS: f64 = 3.0;
pub const PLANE_LOWER: f64 = -10.0;
pub const PLANE_UPPER: f64 = 10.0;
pub const PLANE_SEPARATION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    Circles,
    Planes,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManifoldKind::Circles => "circles",
            ManifoldKind::Planes => "planes",
        })
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circles" => Ok(ManifoldKind::Circles),
            "planes" => Ok(ManifoldKind::Planes),
            other => Err(Error::invalid(format!("unknown manifold kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extent {
    Circles { r1: f64, r2: f64 },
    Planes { lower: f64, upper: f64, separation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    /// Intrinsic dimension.
    pub k: usize,
    /// Ambient dimension.
    pub d: usize,
    /// ℓ2 reach of the decision axis.
    pub reach_decision_axis: f64,
    /// ℓ2 reach of the medial axis of the whole data manifold.
    pub medial_reach: f64,
    pub extent: Extent,
    /// Total intrinsic k-volume of all class manifolds.
    pub vol_k: f64,
}

impl ManifoldSpec {
    /// Circles in R^(2 + codim); `codim` counts the zero axes appended to the
    /// x1–x2 plane.
    pub fn circles(codim: usize) -> Self {
        let (r1, r2) = (CIRCLE_INNER_RADIUS, CIRCLE_OUTER_RADIUS);
        ManifoldSpec {
            kind: ManifoldKind::Circles,
            k: 1,
            d: 2 + codim,
            reach_decision_axis: (r2 - r1) / 2.0,
            // The medial axis is the common center and the circle of radius 2.
            medial_reach: f64::min(r1, (r2 - r1) / 2.0),
            extent: Extent::Circles { r1, r2 },
            vol_k: 2.0 * PI * (r1 + r2),
        }
    }

    /// Planes in R^(2 + codim). Needs `codim >= 1` for the separation axis.
    pub fn planes(codim: usize) -> Result<Self> {
        if codim == 0 {
            return Err(Error::invalid("planes need codim >= 1 for the separation axis"));
        }
        let side = PLANE_UPPER - PLANE_LOWER;
        Ok(ManifoldSpec {
            kind: ManifoldKind::Planes,
            k: 2,
            d: 2 + codim,
            reach_decision_axis: PLANE_SEPARATION / 2.0,
            medial_reach: PLANE_SEPARATION / 2.0,
            extent: Extent::Planes { lower: PLANE_LOWER, upper: PLANE_UPPER, separation: PLANE_SEPARATION },
            vol_k: 2.0 * side * side,
        })
    }

    pub fn codimension(&self) -> usize {
        self.d - self.k
    }

    pub fn n_classes(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < self.k {
            return Err(Error::invalid("ambient dimension below intrinsic dimension"));
        }
        if !(self.vol_k.is_finite() && self.vol_k > 0.0) {
            return Err(Error::invalid("vol_k must be positive and finite"));
        }
        if !(self.reach_decision_axis > 0.0 && self.medial_reach > 0.0) {
            return Err(Error::invalid("reach must be positive"));
        }
        match self.extent {
            Extent::Circles { r1, r2 } if self.kind == ManifoldKind::Circles => {
                if !(0.0 < r1 && r1 < r2) {
                    return Err(Error::invalid("circles need 0 < r1 < r2"));
                }
                if (self.reach_decision_axis - (r2 - r1) / 2.0).abs() > 1e-12 {
                    return Err(Error::invalid("circles reach must be (r2 - r1) / 2"));
                }
                if self.d < 2 {
                    return Err(Error::invalid("circles live in at least two dimensions"));
                }
            }
            Extent::Planes { lower, upper, separation } if self.kind == ManifoldKind::Planes => {
                if !(lower < upper && separation > 0.0) {
                    return Err(Error::invalid("planes need lower < upper and separation > 0"));
                }
                if (self.reach_decision_axis - separation / 2.0).abs() > 1e-12 {
                    return Err(Error::invalid("planes reach must be separation / 2"));
                }
                if self.d < 3 {
                    return Err(Error::invalid("planes need a separation axis"));
                }
            }
            _ => return Err(Error::invalid("extent does not match manifold kind")),
        }
        Ok(())
    }

    fn check_class(&self, class: ClassId) -> Result<()> {
        if class == 1 || class == 2 {
            Ok(())
        } else {
            Err(Error::invalid(format!("class {class} does not exist (classes are 1 and 2)")))
        }
    }

    /// Intrinsic volume of one class manifold.
    pub fn class_volume(&self, class: ClassId) -> Result<f64> {
        self.check_class(class)?;
        Ok(match self.extent {
            Extent::Circles { r1, r2 } => 2.0 * PI * if class == 1 { r1 } else { r2 },
            Extent::Planes { lower, upper, .. } => (upper - lower) * (upper - lower),
        })
    }

    /// Uniform on-manifold sample (uniform in angle for circles).
    pub fn sample_on_class<R: Rng + ?Sized>(&self, class: ClassId, rng: &mut R) -> Result<Vec<f64>> {
        self.check_class(class)?;
        let mut p = vec![0.0; self.d];
        match self.extent {
            Extent::Circles { r1, r2 } => {
                let r = if class == 1 { r1 } else { r2 };
                let theta = 2.0 * PI * rng.random::<f64>();
                p[0] = r * libm::cos(theta);
                p[1] = r * libm::sin(theta);
            }
            Extent::Planes { lower, upper, separation } => {
                p[0] = lower + (upper - lower) * rng.random::<f64>();
                p[1] = lower + (upper - lower) * rng.random::<f64>();
                if class == 2 {
                    p[self.d - 1] = separation;
                }
            }
        }
        Ok(p)
    }

    /// Exact ℓp distance from `x` to the class manifold.
    pub fn distance_to_class(&self, class: ClassId, x: &[f64], norm: Norm) -> Result<f64> {
        self.check_class(class)?;
        check_dim(self.d, x.len())?;
        match self.extent {
            Extent::Planes { lower, upper, separation } => {
                let level = if class == 1 { 0.0 } else { separation };
                let last = self.d - 1;
                let per_axis = x.iter().enumerate().map(|(i, &v)| match i {
                    0 | 1 => (lower - v).max(v - upper).max(0.0),
                    i if i == last => (v - level).abs(),
                    _ => v.abs(),
                });
                Ok(match norm {
                    Norm::L2 => libm::sqrt(per_axis.map(|t| t * t).sum()),
                    Norm::LInf => per_axis.fold(0.0, f64::max),
                })
            }
            Extent::Circles { r1, r2 } => {
                let r = if class == 1 { r1 } else { r2 };
                let rest = &x[2..];
                match norm {
                    Norm::L2 => {
                        let rho = libm::hypot(x[0], x[1]);
                        Ok(libm::sqrt((rho - r) * (rho - r) + dot(rest, rest)))
                    }
                    Norm::LInf => {
                        let rest_max = Norm::LInf.norm(rest);
                        Ok(circle_linf_distance(x[0], x[1], r).max(rest_max))
                    }
                }
            }
        }
    }

    /// Offset uniform in the ℓ2 ball of the normal space at `base`.
    fn normal_offset<R: Rng + ?Sized>(&self, base: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
        let mut off = vec![0.0; self.d];
        match self.extent {
            Extent::Circles { .. } => {
                let v = uniform_in_ball(rng, self.d - 1, radius, Norm::L2);
                let rho = libm::hypot(base[0], base[1]);
                off[0] = v[0] * base[0] / rho;
                off[1] = v[0] * base[1] / rho;
                off[2..].copy_from_slice(&v[1..]);
            }
            Extent::Planes { .. } => {
                let v = uniform_in_ball(rng, self.d - 2, radius, Norm::L2);
                off[2..].copy_from_slice(&v);
            }
        }
        off
    }
}

/// min over θ of max(|x - r cos θ|, |y - r sin θ|), by a dense angular scan
/// refined with golden-section search.
fn circle_linf_distance(x: f64, y: f64, r: f64) -> f64 {
    let f = |t: f64| f64::max((x - r * libm::cos(t)).abs(), (y - r * libm::sin(t)).abs());
    const STEPS: usize = 4096;
    let h = 2.0 * PI / STEPS as f64;
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for i in 0..STEPS {
        let t = i as f64 * h;
        let v = f(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let (mut a, mut b) = (best_t - h, best_t + h);
    let g = (libm::sqrt(5.0) - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.min(f(0.5 * (a + b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetRole {
    Train,
    Test,
}

impl fmt::Display for DatasetRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetRole::Train => "train",
            DatasetRole::Test => "test",
        })
    }
}

impl FromStr for DatasetRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(DatasetRole::Train),
            "test" => Ok(DatasetRole::Test),
            other => Err(Error::invalid(format!("unknown dataset role `{other}`"))),
        }
    }
}

/// Labeled points. `spec` is `None` for ingested data, whose geometry
/// (and therefore reach) is unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: PointCloud,
    pub labels: Vec<ClassId>,
    pub spec: Option<ManifoldSpec>,
    pub role: DatasetRole,
    pub seed: Option<u64>,
}

impl LabeledDataset {
    pub fn new(points: PointCloud, labels: Vec<ClassId>, spec: Option<ManifoldSpec>, role: DatasetRole) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l == 0) {
            return Err(Error::invalid("class ids start at 1"));
        }
        if let Some(spec) = &spec {
            spec.validate()?;
            check_dim(spec.d, points.dim())?;
        }
        Ok(LabeledDataset { points, labels, spec, role, seed: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Largest class id present, which is the class count for contiguous labels.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn labels_contiguous(&self) -> bool {
        let counts = self.class_counts();
        let c = self.n_classes();
        (1..=c as ClassId).all(|k| counts.get(&k).copied().unwrap_or(0) > 0)
    }

    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        let mut m = BTreeMap::new();
        for &l in &self.labels {
            *m.entry(l).or_insert(0) += 1;
        }
        m
    }

    pub fn class_indices(&self, class: ClassId) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut points = PointCloud::with_capacity(self.dim(), indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            points.push(self.points.row(i)).expect("same dimension");
            labels.push(self.labels[i]);
        }
        LabeledDataset { points, labels, spec: self.spec, role: self.role, seed: self.seed }
    }
}

pub fn make_circles(n_per_class: usize, codim: usize, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be positive"));
    }
    let spec = ManifoldSpec::circles(codim);
    let mut rng = rng::substream(seed, rng::DATASET);
    let mut points = PointCloud::with_capacity(spec.d, 2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in [1, 2] {
        for _ in 0..n_per_class {
            points.push(&spec.sample_on_class(class, &mut rng)?)?;
            labels.push(class);
        }
    }
    let mut ds = LabeledDataset::new(points, labels, Some(spec), DatasetRole::Train)?;
    ds.seed = Some(seed);
    Ok(ds)
}

/// Named grid densities for the planes training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverLevel {
    One,
    Half,
    Quarter,
}

impl CoverLevel {
    /// 15, 29 and 57 vertices per axis give 450, 1682 and 6498 samples.
    pub fn vertices_per_axis(self) -> usize {
        match self {
            CoverLevel::One => 15,
            CoverLevel::Half => 29,
            CoverLevel::Quarter => 57,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            CoverLevel::One => 1.0,
            CoverLevel::Half => 0.5,
            CoverLevel::Quarter => 0.25,
        }
    }
}

impl fmt::Display for CoverLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoverLevel::One => "1.0",
            CoverLevel::Half => "0.5",
            CoverLevel::Quarter => "0.25",
        })
    }
}

impl FromStr for CoverLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "1.0" => Ok(CoverLevel::One),
            "0.5" | ".5" => Ok(CoverLevel::Half),
            "0.25" | ".25" => Ok(CoverLevel::Quarter),
            other => Err(Error::invalid(format!("cover level must be 1.0, 0.5 or 0.25, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridDensity {
    Cover(CoverLevel),
    VerticesPerAxis(usize),
}

impl GridDensity {
    pub fn vertices_per_axis(self) -> usize {
        match self {
            GridDensity::Cover(c) => c.vertices_per_axis(),
            GridDensity::VerticesPerAxis(n) => n,
        }
    }
}

/// Planes train set on grid vertices and test set on grid cell centers.
pub fn make_planes(grid: GridDensity, codim: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let spec = ManifoldSpec::planes(codim)?;
    let n = grid.vertices_per_axis();
    if n < 2 {
        return Err(Error::invalid("planes grid needs at least two vertices per axis"));
    }
    let Extent::Planes { lower, upper, separation } = spec.extent else {
        unreachable!()
    };
    let intervals = (n - 1) as f64;
    let at = |t: f64| lower + (upper - lower) * t / intervals;

    let build = |offset: f64, count: usize| -> Result<(PointCloud, Vec<ClassId>)> {
        let mut points = PointCloud::with_capacity(spec.d, 2 * count * count);
        let mut labels = Vec::with_capacity(2 * count * count);
        let mut p = vec![0.0; spec.d];
        for class in [1, 2] {
            p[spec.d - 1] = if class == 1 { 0.0 } else { separation };
            for i in 0..count {
                for j in 0..count {
                    p[0] = at(i as f64 + offset);
                    p[1] = at(j as f64 + offset);
                    points.push(&p)?;
                    labels.push(class);
                }
            }
        }
        Ok((points, labels))
    };

    let (tp, tl) = build(0.0, n)?;
    let (sp, sl) = build(0.5, n - 1)?;
    Ok((
        LabeledDataset::new(tp, tl, Some(spec), DatasetRole::Train)?,
        LabeledDataset::new(sp, sl, Some(spec), DatasetRole::Test)?,
    ))
}

/// Dense uniform on-manifold sample used as the reference set when measuring
/// cover radii.
pub fn reference_sample(spec: &ManifoldSpec, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::invalid("reference sample must be nonempty"));
    }
    let mut rng = rng::substream(seed, rng::DATASET);
    let mut points = PointCloud::with_capacity(spec.d, 2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for class in [1, 2] {
        for _ in 0..per_class {
            points.push(&spec.sample_on_class(class, &mut rng)?)?;
            labels.push(class);
        }
    }
    let mut ds = LabeledDataset::new(points, labels, Some(*spec), DatasetRole::Test)?;
    ds.seed = Some(seed);
    Ok(ds)
}

/// Directed Hausdorff distance from `reference` to `candidate`, per class:
/// the largest distance from a reference point to its nearest same-class
/// candidate. `+∞` when a reference class has no candidate.
pub fn measure_delta_cover(candidate: &LabeledDataset, reference: &LabeledDataset, norm: Norm) -> Result<f64> {
    check_dim(candidate.dim(), reference.dim())?;
    let mut delta: f64 = 0.0;
    for (&class, _) in reference.class_counts().iter() {
        let idx = candidate.class_indices(class);
        if idx.is_empty() {
            return Ok(f64::INFINITY);
        }
        let sub = candidate.subset(&idx);
        let index = NeighborIndex::new(sub.points, sub.labels, norm)?;
        for i in reference.class_indices(class) {
            let nb = index.nearest(reference.points.row(i))?;
            delta = delta.max(nb.distance);
        }
    }
    Ok(delta)
}

/// How perturbation offsets are drawn around on-manifold base points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubeLaw {
    /// Uniform in the ambient ℓp ball of radius ε.
    UniformBall,
    /// On the ℓp sphere of radius ε (worst-case shell).
    Shell,
    /// Uniform in the ℓ2 ball of the normal space, which is the uniform
    /// measure on the tube for flat manifolds.
    NormalBall,
}

/// Points within ℓp distance `epsilon` of class manifold `class`.
pub fn tube_sample<R: Rng + ?Sized>(
    spec: &ManifoldSpec,
    class: ClassId,
    epsilon: f64,
    norm: Norm,
    n: usize,
    law: TubeLaw,
    rng: &mut R,
) -> Result<PointCloud> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be nonnegative"));
    }
    if epsilon >= spec.reach_decision_axis {
        return Err(Error::BeyondReach { epsilon, reach: spec.reach_decision_axis });
    }
    sample_tube(spec, class, epsilon, norm, n, law, rng)
}

fn sample_tube<R: Rng + ?Sized>(
    spec: &ManifoldSpec,
    class: ClassId,
    epsilon: f64,
    norm: Norm,
    n: usize,
    law: TubeLaw,
    rng: &mut R,
) -> Result<PointCloud> {
    if law == TubeLaw::NormalBall && norm != Norm::L2 {
        return Err(Error::invalid("normal-ball tube sampling is defined for l2 only"));
    }
    let mut out = PointCloud::with_capacity(spec.d, n);
    for _ in 0..n {
        let mut p = spec.sample_on_class(class, rng)?;
        let off = match law {
            TubeLaw::UniformBall => uniform_in_ball(rng, spec.d, epsilon, norm),
            TubeLaw::Shell => uniform_on_sphere(rng, spec.d, epsilon, norm),
            TubeLaw::NormalBall => spec.normal_offset(&p, epsilon, rng),
        };
        p.iter_mut().zip(&off).for_each(|(a, b)| *a += b);
        out.push(&p)?;
    }
    Ok(out)
}

/// Upper bound on vol(X^ε) / vol(M^ε): union of |X| disjoint d-balls over
/// the flat-tube volume vol_{d-k}(B_ε) · vol_k(M).
pub fn coverage_ratio_bound(d: usize, k: usize, epsilon: f64, n_samples: usize, vol_k: f64) -> Result<f64> {
    if k == 0 || d <= k {
        return Err(Error::invalid(format!("need d > k >= 1, got d = {d}, k = {k}")));
    }
    if !(epsilon >= 0.0) || !(vol_k > 0.0 && vol_k.is_finite()) {
        return Err(Error::invalid("epsilon must be nonnegative and vol_k positive"));
    }
    if n_samples == 0 || epsilon == 0.0 {
        return Ok(0.0);
    }
    let (d, k) = (d as f64, k as f64);
    let log_ratio = libm::lgamma((d - k) / 2.0 + 1.0) - libm::lgamma(d / 2.0 + 1.0)
        + 0.5 * k * libm::log(PI)
        + k * libm::log(epsilon)
        + libm::log(n_samples as f64)
        - libm::log(vol_k);
    Ok(libm::exp(log_ratio))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

pub const MIN_MC_POINTS: usize = 1000;

/// Monte Carlo estimate of the fraction of the ε-tube lying within ℓ2
/// distance ε of a training point. Tube points are drawn with
/// [`TubeLaw::NormalBall`], classes weighted by intrinsic volume; this is the
/// uniform tube measure for flat manifolds and slightly biased for circles.
pub fn coverage_ratio_mc<R: Rng + ?Sized>(train: &LabeledDataset, epsilon: f64, n_mc: usize, rng: &mut R) -> Result<McEstimate> {
    let spec = train
        .spec
        .ok_or_else(|| Error::invalid("coverage estimation needs a dataset with known geometry"))?;
    if n_mc < MIN_MC_POINTS {
        return Err(Error::invalid(format!("n_mc must be at least {MIN_MC_POINTS}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if epsilon > spec.medial_reach {
        return Err(Error::BeyondReach { epsilon, reach: spec.medial_reach });
    }
    let index = NeighborIndex::new(train.points.clone(), train.labels.clone(), Norm::L2)?;
    let w1 = spec.class_volume(1)?;
    let p1 = w1 / (w1 + spec.class_volume(2)?);
    let mut hits = 0usize;
    for _ in 0..n_mc {
        let class = if rng.random::<f64>() < p1 { 1 } else { 2 };
        let q = sample_tube(&spec, class, epsilon, Norm::L2, 1, TubeLaw::NormalBall, rng)?;
        if index.any_within(q.row(0), epsilon)? {
            hits += 1;
        }
    }
    let p = hits as f64 / n_mc as f64;
    Ok(McEstimate { estimate: p, stderr: libm::sqrt(p * (1.0 - p) / n_mc as f64), n: n_mc })
}

/// Cover radii sufficient for the nearest-neighbor classifier and for
/// ball-based adversarial training on two parallel flat k-planes at distance 2
/// (reach 1), and the resulting lower bound on the sample-count ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringGap {
    pub delta_nn: f64,
    pub delta_ball: f64,
    pub count_ratio_lower: f64,
}

pub fn covering_gap(k: usize, epsilon: f64) -> Result<CoveringGap> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid("epsilon must lie in [0, 1)"));
    }
    let delta_nn = 2.0 * libm::sqrt(1.0 - epsilon);
    let delta_ball = libm::sqrt(1.0 - epsilon * epsilon);
    Ok(CoveringGap { delta_nn, delta_ball, count_ratio_lower: libm::pow(delta_nn / delta_ball, k as f64) })
}

/// Axis-aligned grid on `[0, side]^k` whose covering radius (half the cell
/// diagonal) does not exceed the requested δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCover {
    pub k: usize,
    pub side: f64,
    pub per_axis: usize,
    pub spacing: f64,
}

impl GridCover {
    pub fn for_radius(k: usize, side: f64, delta: f64) -> Result<Self> {
        if k == 0 || !(side > 0.0) || !(delta > 0.0) {
            return Err(Error::invalid("grid cover needs k >= 1, side > 0, delta > 0"));
        }
        let max_spacing = 2.0 * delta / libm::sqrt(k as f64);
        let intervals = libm::ceil(side / max_spacing).max(1.0) as usize;
        Ok(GridCover { k, side, per_axis: intervals + 1, spacing: side / intervals as f64 })
    }

    pub fn count(&self) -> f64 {
        libm::pow(self.per_axis as f64, self.k as f64)
    }

    pub fn covering_radius(&self) -> f64 {
        0.5 * self.spacing * libm::sqrt(self.k as f64)
    }

    /// ℓ2 distance from `x` (in `[0, side]^k`) to the nearest grid vertex.
    pub fn nearest_vertex_distance(&self, x: &[f64]) -> f64 {
        let last = (self.per_axis - 1) as f64;
        let s: f64 = x
            .iter()
            .map(|&v| {
                let j = libm::round(v / self.spacing).clamp(0.0, last);
                let t = v - j * self.spacing;
                t * t
            })
            .sum();
        libm::sqrt(s)
    }
}

/// Ratio of grid-cover sizes at the ball-training and nearest-neighbor radii.
pub fn empirical_count_ratio(k: usize, epsilon: f64, side: f64) -> Result<f64> {
    let gap = covering_gap(k, epsilon)?;
    let ball = GridCover::for_radius(k, side, gap.delta_ball)?;
    let nn = GridCover::for_radius(k, side, gap.delta_nn)?;
    Ok(ball.count() / nn.count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn circles_lie_on_their_radii() {
        let ds = make_circles(1000, 0, 4).unwrap();
        assert_eq!(ds.len(), 2000);
        assert_eq!(ds.dim(), 2);
        for (p, &l) in ds.points.rows().zip(&ds.labels) {
            let r = Norm::L2.norm(p);
            let want = if l == 1 { 1.0 } else { 3.0 };
            assert!((r - want).abs() < 1e-9);
        }
        assert_eq!(ds.spec.unwrap().reach_decision_axis, 1.0);
    }

    #[test]
    fn circles_padding_is_zero() {
        let ds = make_circles(1, 498, 9).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 500);
        for p in ds.points.rows() {
            assert!(p[2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn circles_min_interclass_distance() {
        let ds = make_circles(1000, 10, 1).unwrap();
        let (a, b): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.labels[i] == 1);
        let mut min = f64::INFINITY;
        for &i in &a {
            for &j in &b {
                min = min.min(Norm::L2.distance(ds.points.row(i), ds.points.row(j)));
            }
        }
        assert!(min >= 2.0 - 1e-9, "{min}");
    }

    #[test]
    fn circles_reject_empty() {
        assert!(matches!(make_circles(0, 3, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(make_circles(50, 5, 17).unwrap(), make_circles(50, 5, 17).unwrap());
        assert_ne!(make_circles(50, 5, 17).unwrap(), make_circles(50, 5, 18).unwrap());
    }

    #[test]
    fn planes_sample_counts() {
        for (level, train_n, test_n) in [
            (CoverLevel::One, 450, 392),
            (CoverLevel::Half, 1682, 1568),
            (CoverLevel::Quarter, 6498, 6272),
        ] {
            let (train, test) = make_planes(GridDensity::Cover(level), 1).unwrap();
            assert_eq!(train.len(), train_n);
            assert_eq!(test.len(), test_n);
        }
    }

    #[test]
    fn planes_need_separation_axis() {
        assert!(matches!(
            make_planes(GridDensity::Cover(CoverLevel::One), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn planes_points_on_manifold() {
        let (train, test) = make_planes(GridDensity::Cover(CoverLevel::One), 5).unwrap();
        let spec = train.spec.unwrap();
        for ds in [&train, &test] {
            for (p, &l) in ds.points.rows().zip(&ds.labels) {
                assert!(spec.distance_to_class(l, p, Norm::L2).unwrap() <= 1e-9);
                assert!(p[2..spec.d - 1].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn planes_test_points_are_cell_centers() {
        // Oracle: direct scan over the generated vertex set.
        let (train, test) = make_planes(GridDensity::Cover(CoverLevel::One), 1).unwrap();
        let want = 0.5 * (20.0 / 14.0) * libm::sqrt(2.0);
        for (q, &lq) in test.points.rows().zip(&test.labels) {
            let mut best = f64::INFINITY;
            for (p, &lp) in train.points.rows().zip(&train.labels) {
                if lp == lq {
                    best = best.min(Norm::L2.distance(p, q));
                }
            }
            assert!((best - want).abs() < 1e-9);
            assert!((best - 1.0102).abs() < 1e-4);
        }
    }

    #[test]
    fn delta_cover_of_itself_is_zero() {
        let ds = make_circles(100, 2, 3).unwrap();
        assert_eq!(measure_delta_cover(&ds, &ds, Norm::L2).unwrap(), 0.0);
    }

    #[test]
    fn delta_cover_of_antipodal_pair_is_sqrt2() {
        let spec = ManifoldSpec::circles(0);
        let cand = LabeledDataset::new(
            PointCloud::from_rows(2, &[[1.0, 0.0], [-1.0, 0.0]]).unwrap(),
            vec![1, 1],
            Some(spec),
            DatasetRole::Train,
        )
        .unwrap();
        // Dense reference on the unit circle only.
        let n = 100_000;
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [libm::cos(t), libm::sin(t)]
            })
            .collect();
        let reference = LabeledDataset::new(PointCloud::from_rows(2, &rows).unwrap(), vec![1; n], Some(spec), DatasetRole::Test).unwrap();
        let delta = measure_delta_cover(&cand, &reference, Norm::L2).unwrap();
        assert!((delta - libm::sqrt(2.0)).abs() < 1e-6, "{delta}");
    }

    #[test]
    fn delta_cover_missing_class_is_infinite() {
        let (train, _) = make_planes(GridDensity::Cover(CoverLevel::One), 1).unwrap();
        let only_first = train.subset(&train.class_indices(1));
        assert_eq!(measure_delta_cover(&only_first, &train, Norm::L2).unwrap(), f64::INFINITY);
    }

    #[test]
    fn planes_cover_radius_against_dense_reference() {
        let (train, _) = make_planes(GridDensity::Cover(CoverLevel::One), 1).unwrap();
        let reference = reference_sample(&train.spec.unwrap(), 50_000, 5).unwrap();
        let delta = measure_delta_cover(&train, &reference, Norm::L2).unwrap();
        assert!((delta - 1.0102).abs() <= 0.01, "{delta}");
    }

    #[test]
    fn tube_sample_zero_epsilon_is_on_manifold() {
        let spec = ManifoldSpec::circles(3);
        let mut rng = substream(2, rng::MC);
        for law in [TubeLaw::UniformBall, TubeLaw::Shell, TubeLaw::NormalBall] {
            let pts = tube_sample(&spec, 2, 0.0, Norm::L2, 100, law, &mut rng).unwrap();
            for p in pts.rows() {
                assert!(spec.distance_to_class(2, p, Norm::L2).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn tube_sample_circles_radius_band() {
        let spec = ManifoldSpec::circles(0);
        let mut rng = substream(3, rng::MC);
        let pts = tube_sample(&spec, 1, 0.5, Norm::L2, 2000, TubeLaw::UniformBall, &mut rng).unwrap();
        for p in pts.rows() {
            let r = Norm::L2.norm(p);
            assert!((0.5..=1.5).contains(&r));
            assert!(spec.distance_to_class(1, p, Norm::L2).unwrap() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn tube_sample_planes_separation_coordinate() {
        let spec = ManifoldSpec::planes(1).unwrap();
        let mut rng = substream(4, rng::MC);
        for norm in [Norm::L2, Norm::LInf] {
            for law in [TubeLaw::UniformBall, TubeLaw::Shell] {
                let pts = tube_sample(&spec, 1, 0.5, norm, 2000, law, &mut rng).unwrap();
                for p in pts.rows() {
                    assert!(p[2].abs() <= 0.5);
                    assert!(spec.distance_to_class(1, p, norm).unwrap() <= 0.5 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn tube_sample_linf_circles_within_budget() {
        let spec = ManifoldSpec::circles(2);
        let mut rng = substream(5, rng::MC);
        let pts = tube_sample(&spec, 2, 0.4, Norm::LInf, 300, TubeLaw::Shell, &mut rng).unwrap();
        for p in pts.rows() {
            assert!(spec.distance_to_class(2, p, Norm::LInf).unwrap() <= 0.4 + 1e-9);
        }
    }

    #[test]
    fn tube_sample_refuses_beyond_reach() {
        let spec = ManifoldSpec::planes(2).unwrap();
        let mut rng = substream(0, rng::MC);
        assert!(matches!(
            tube_sample(&spec, 1, 1.0, Norm::L2, 10, TubeLaw::Shell, &mut rng),
            Err(Error::BeyondReach { .. })
        ));
    }

    #[test]
    fn linf_circle_distance_matches_known_points() {
        let spec = ManifoldSpec::circles(0);
        // On the circle.
        assert!(spec.distance_to_class(1, &[0.6, 0.8], Norm::LInf).unwrap() < 1e-9);
        // Along an axis the closest ℓ∞ point is the axis crossing.
        assert!((spec.distance_to_class(1, &[2.0, 0.0], Norm::LInf).unwrap() - 1.0).abs() < 1e-9);
        // At the center, the ℓ∞ distance is r / √2.
        let c = spec.distance_to_class(1, &[0.0, 0.0], Norm::LInf).unwrap();
        assert!((c - 1.0 / libm::sqrt(2.0)).abs() < 1e-9);
    }

    #[test]
    fn coverage_bound_zero_samples() {
        assert_eq!(coverage_ratio_bound(12, 2, 0.5, 0, 800.0).unwrap(), 0.0);
        assert!(coverage_ratio_bound(2, 2, 0.5, 10, 800.0).is_err());
    }

    #[test]
    fn coverage_bound_matches_exact_gamma_oracle() {
        // Γ(6) = 120 and Γ(7) = 720 exactly, so for d = 12, k = 2 the ratio is
        // (120 / 720) · π · ε² · n / vol_k.
        let got = coverage_ratio_bound(12, 2, 0.5, 450, 800.0).unwrap();
        let want = 120.0 / 720.0 * PI * 0.25 * 450.0 / 800.0;
        assert!(((got - want) / want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn coverage_bound_decreases_with_dimension() {
        let vals: Vec<f64> = [4, 12, 102, 502]
            .iter()
            .map(|&d| coverage_ratio_bound(d, 2, 0.5, 450, 800.0).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        // Γ(251) / Γ(252) = 1 / 251.
        let want = PI * 0.25 * 450.0 / 800.0 / 251.0;
        assert!((vals[3] - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn covering_gap_values() {
        for k in 1..=8 {
            let g = covering_gap(k, 0.0).unwrap();
            assert_eq!((g.delta_nn, g.delta_ball), (2.0, 1.0));
            assert_eq!(g.count_ratio_lower, libm::pow(2.0, k as f64));
        }
        let g = covering_gap(2, 0.5).unwrap();
        assert!((g.delta_nn - libm::sqrt(2.0)).abs() < 1e-12);
        assert!((g.delta_ball - libm::sqrt(0.75)).abs() < 1e-12);
        assert!((g.count_ratio_lower - 8.0 / 3.0).abs() < 1e-12);
        assert!(covering_gap(2, 1.0).is_err());
    }

    #[test]
    fn grid_cover_actually_covers() {
        let mut rng = substream(6, rng::MC);
        for k in 1..=4 {
            for delta in [0.7, 1.0, 1.9] {
                let g = GridCover::for_radius(k, 20.0, delta).unwrap();
                assert!(g.covering_radius() <= delta + 1e-12);
                for _ in 0..2000 {
                    let x: Vec<f64> = (0..k).map(|_| 20.0 * rng.random::<f64>()).collect();
                    assert!(g.nearest_vertex_distance(&x) <= delta + 1e-12);
                }
            }
        }
    }

    #[test]
    fn mc_refuses_small_runs() {
        let (train, _) = make_planes(GridDensity::Cover(CoverLevel::One), 1).unwrap();
        let mut rng = substream(0, rng::MC);
        assert!(coverage_ratio_mc(&train, 0.5, 999, &mut rng).is_err());
    }

    #[test]
    fn mc_full_cover_approaches_one() {
        // A very fine grid: cover radius ≈ 0.05 ≪ ε = 0.9.
        let (train, _) = make_planes(GridDensity::VerticesPerAxis(281), 1).unwrap();
        let mut rng = substream(1, rng::MC);
        let est = coverage_ratio_mc(&train, 0.9, 4000, &mut rng).unwrap();
        assert!(est.estimate > 0.99, "{est:?}");
    }
}
