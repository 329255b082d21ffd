//! Exact nearest-neighbor queries, Voronoi-cell membership against rival
//! samples, constraint-set construction and the δ-cover certification
//! predicates for the 1-NN classifier and for ball-based adversarial training.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::geometry::ClassId;
use crate::kdtree::KdTree;
use crate::linalg::{Norm, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub label: ClassId,
    pub distance: f64,
}

/// Immutable exact nearest-neighbor index. Ties go to the lowest point index.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: PointCloud,
    labels: Vec<ClassId>,
    norm: Norm,
    tree: Option<KdTree>,
}

impl NeighborIndex {
    /// Index accelerated by a kd-tree.
    pub fn new(points: PointCloud, labels: Vec<ClassId>, norm: Norm) -> Result<Self> {
        let mut idx = Self::brute_force(points, labels, norm)?;
        idx.tree = Some(KdTree::build(&idx.points));
        Ok(idx)
    }

    /// Index that answers every query by a linear scan.
    pub fn brute_force(points: PointCloud, labels: Vec<ClassId>, norm: Norm) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid("points and labels differ in length"));
        }
        Ok(NeighborIndex { points, labels, norm, tree: None })
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

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("neighbor index is empty"));
        }
        check_dim(self.dim(), query.len())
    }

    pub fn nearest(&self, query: &[f64]) -> Result<Neighbor> {
        self.check_query(query)?;
        let (index, c) = match &self.tree {
            Some(tree) => tree.nearest(&self.points, query, self.norm).expect("nonempty"),
            None => self.scan(query),
        };
        Ok(Neighbor { index, label: self.labels[index], distance: self.norm.from_cmp(c) })
    }

    /// Linear-scan nearest neighbor; the reference semantics for every query.
    pub fn nearest_scan(&self, query: &[f64]) -> Result<Neighbor> {
        self.check_query(query)?;
        let (index, c) = self.scan(query);
        Ok(Neighbor { index, label: self.labels[index], distance: self.norm.from_cmp(c) })
    }

    fn scan(&self, query: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.rows().enumerate() {
            let c = self.norm.cmp_distance(p, query);
            if c < best.1 {
                best = (i, c);
            }
        }
        best
    }

    /// True if some indexed point lies within `radius` (inclusive).
    pub fn any_within(&self, query: &[f64], radius: f64) -> Result<bool> {
        self.check_query(query)?;
        let r = self.norm.to_cmp(radius);
        Ok(match &self.tree {
            Some(tree) => tree.any_within(&self.points, query, self.norm, r),
            None => self.points.rows().any(|p| self.norm.cmp_distance(p, query) <= r),
        })
    }

    /// The `m` nearest points of `class` to `query`, ordered by distance then
    /// index.
    pub fn nearest_in_class(&self, query: &[f64], class: ClassId, m: usize) -> Result<Vec<usize>> {
        check_dim(self.dim(), query.len())?;
        let mut cands: Vec<(f64, usize)> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| (self.norm.cmp_distance(self.points.row(i), query), i))
            .collect();
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if cands.len() > m {
            cands.select_nth_unstable_by(m, by_dist);
            cands.truncate(m);
        }
        cands.sort_unstable_by(by_dist);
        Ok(cands.into_iter().map(|(_, i)| i).collect())
    }

    pub fn classes(&self) -> Vec<ClassId> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Label of the nearest training point.
pub fn nn_classify(index: &NeighborIndex, query: &[f64]) -> Result<ClassId> {
    Ok(index.nearest(query)?.label)
}

/// Rival samples bounding the Voronoi cell of one training point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub anchor: Vec<f64>,
    pub anchor_id: usize,
    pub anchor_class: ClassId,
    pub rivals: PointCloud,
    pub rival_ids: Vec<usize>,
    /// Rivals retained per rival class.
    pub m: usize,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.rival_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rival_ids.is_empty()
    }
}

/// The `m` nearest samples of every other class to training point
/// `anchor_id`. Same-class samples never constrain the cell. A rival class
/// with fewer than `m` samples contributes all of them.
pub fn constraint_set(index: &NeighborIndex, anchor_id: usize, m: usize) -> Result<ConstraintSet> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    if anchor_id >= index.len() {
        return Err(Error::invalid(format!("anchor {anchor_id} out of range")));
    }
    let anchor = index.point(anchor_id);
    let anchor_class = index.label(anchor_id);
    let mut rivals = PointCloud::new(index.dim());
    let mut rival_ids = Vec::new();
    for class in index.classes() {
        if class == anchor_class {
            continue;
        }
        for i in index.nearest_in_class(anchor, class, m)? {
            rivals.push(index.point(i))?;
            rival_ids.push(i);
        }
    }
    Ok(ConstraintSet { anchor: anchor.to_vec(), anchor_id, anchor_class, rivals, rival_ids, m })
}

pub fn constraint_sets(index: &NeighborIndex, m: usize) -> Result<Vec<ConstraintSet>> {
    (0..index.len()).map(|i| constraint_set(index, i, m)).collect()
}

/// Whether `query` is at least as close to `anchor` as to every rival.
/// Boundary points count as inside.
pub fn in_voronoi_cell(anchor: &[f64], query: &[f64], constraints: &ConstraintSet, norm: Norm) -> Result<bool> {
    check_dim(anchor.len(), query.len())?;
    check_dim(constraints.rivals.dim(), query.len())?;
    if constraints.anchor.as_slice() != anchor {
        return Err(Error::invalid("constraint set belongs to a different anchor"));
    }
    Ok(satisfies(anchor, query, &constraints.rivals, norm))
}

pub(crate) fn satisfies(anchor: &[f64], query: &[f64], rivals: &PointCloud, norm: Norm) -> bool {
    let own = norm.cmp_distance(anchor, query);
    rivals.rows().all(|z| own <= norm.cmp_distance(z, query))
}

/// Outcome of a δ-cover certification check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certification {
    pub certified: bool,
    /// Set when ε is not below the reach, where no cover certifies anything.
    pub beyond_reach: bool,
    /// Largest δ the predicate accepts (0 when beyond reach).
    pub max_delta: f64,
}

fn certify(delta: f64, reach: f64, epsilon: f64, factor: f64) -> Result<Certification> {
    if !(delta >= 0.0 && reach >= 0.0 && epsilon >= 0.0) {
        return Err(Error::invalid("certification arguments must be nonnegative"));
    }
    if epsilon >= reach {
        return Ok(Certification { certified: false, beyond_reach: true, max_delta: 0.0 });
    }
    let max_delta = factor * (reach - epsilon);
    Ok(Certification { certified: delta <= max_delta, beyond_reach: false, max_delta })
}

/// 1-NN on a δ-cover is correct on the ε-tube when δ ≤ 2(reach − ε).
pub fn certify_nn_cover(delta: f64, reach: f64, epsilon: f64) -> Result<Certification> {
    certify(delta, reach, epsilon, 2.0)
}

/// Ball-based adversarial training on a δ-cover is correct on the ε-tube
/// when δ ≤ reach − ε.
pub fn certify_ball_cover(delta: f64, reach: f64, epsilon: f64) -> Result<Certification> {
    certify(delta, reach, epsilon, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_circles, make_planes, tube_sample, CoverLevel, GridDensity, TubeLaw};
    use crate::rng::{substream, MC};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(points: &[f64], labels: &[ClassId]) -> NeighborIndex {
        NeighborIndex::new(PointCloud::from_flat(1, points.to_vec()).unwrap(), labels.to_vec(), Norm::L2).unwrap()
    }

    #[test]
    fn classify_on_a_line() {
        let idx = line(&[0.0, 2.0], &[1, 2]);
        assert_eq!(nn_classify(&idx, &[0.4]).unwrap(), 1);
        assert_eq!(nn_classify(&idx, &[1.6]).unwrap(), 2);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let idx = line(&[0.0, 2.0], &[1, 2]);
        assert_eq!(nn_classify(&idx, &[1.0]).unwrap(), 1);
        let rev = line(&[2.0, 0.0], &[2, 1]);
        assert_eq!(nn_classify(&rev, &[1.0]).unwrap(), 2);
    }

    #[test]
    fn classify_rejects_dimension_mismatch() {
        let idx = line(&[0.0, 2.0], &[1, 2]);
        assert!(matches!(nn_classify(&idx, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        let empty = NeighborIndex::new(PointCloud::new(1), vec![], Norm::L2).unwrap();
        assert!(nn_classify(&empty, &[0.0]).is_err());
    }

    fn pair_constraints(anchor: &[f64], rivals: &[&[f64]]) -> ConstraintSet {
        let mut pc = PointCloud::new(anchor.len());
        for r in rivals {
            pc.push(r).unwrap();
        }
        ConstraintSet {
            anchor: anchor.to_vec(),
            anchor_id: 0,
            anchor_class: 1,
            rival_ids: (1..=rivals.len()).collect(),
            rivals: pc,
            m: rivals.len(),
        }
    }

    #[test]
    fn voronoi_membership_on_a_line() {
        let c = pair_constraints(&[0.0], &[&[2.0]]);
        assert!(in_voronoi_cell(&[0.0], &[0.5], &c, Norm::L2).unwrap());
        assert!(in_voronoi_cell(&[0.0], &[1.0], &c, Norm::L2).unwrap());
        assert!(!in_voronoi_cell(&[0.0], &[1.0 + 1e-12], &c, Norm::L2).unwrap());
    }

    #[test]
    fn voronoi_membership_linf() {
        let c = pair_constraints(&[0.0, 0.0], &[&[2.0, 0.0], &[0.0, 2.0]]);
        // ‖q − anchor‖∞ = 1.2 but ‖q − (2, 0)‖∞ = max(0.8, 0.3) = 0.8.
        assert!(!in_voronoi_cell(&[0.0, 0.0], &[1.2, 0.3], &c, Norm::LInf).unwrap());
        assert!(in_voronoi_cell(&[0.0, 0.0], &[0.5, 0.3], &c, Norm::LInf).unwrap());
    }

    #[test]
    fn voronoi_rejects_foreign_anchor() {
        let c = pair_constraints(&[0.0], &[&[2.0]]);
        assert!(in_voronoi_cell(&[0.1], &[0.5], &c, Norm::L2).is_err());
    }

    #[test]
    fn constraint_set_two_classes() {
        let ds = make_circles(100, 0, 5).unwrap();
        let idx = NeighborIndex::new(ds.points.clone(), ds.labels.clone(), Norm::L2).unwrap();
        let c = constraint_set(&idx, 3, 10).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.rival_ids.iter().all(|&i| ds.labels[i] != ds.labels[3]));
        assert!(constraint_set(&idx, 3, 0).is_err());
    }

    #[test]
    fn constraint_set_exhausts_small_rival_class() {
        let idx = line(&[0.0, 0.5, 2.0, 3.0, 4.0], &[1, 1, 2, 2, 3]);
        let c = constraint_set(&idx, 0, 10).unwrap();
        assert_eq!(c.rival_ids, vec![2, 3, 4]);
        assert!(c.len() <= 10 * 2);
    }

    #[test]
    fn nearest_rival_on_circles_has_closest_angle() {
        let ds = make_circles(200, 0, 8).unwrap();
        let idx = NeighborIndex::new(ds.points.clone(), ds.labels.clone(), Norm::L2).unwrap();
        let angle = |p: &[f64]| libm::atan2(p[1], p[0]);
        for anchor in 0..200 {
            let c = constraint_set(&idx, anchor, 1).unwrap();
            let a = angle(ds.points.row(anchor));
            // Brute-force: the outer point with the smallest angular gap.
            let gap = |j: usize| {
                let t = (angle(ds.points.row(j)) - a).abs();
                t.min(2.0 * core::f64::consts::PI - t)
            };
            let best = (200..400).min_by(|&i, &j| gap(i).total_cmp(&gap(j))).unwrap();
            assert_eq!(c.rival_ids[0], best);
        }
    }

    #[test]
    fn certification_predicates() {
        assert!(certify_nn_cover(1.0, 1.0, 0.5).unwrap().certified);
        assert!(!certify_nn_cover(1.0, 1.0, 0.6).unwrap().certified);
        assert!(certify_nn_cover(0.0, 0.3, 0.29).unwrap().certified);
        assert!(certify_ball_cover(1.0, 1.0, 0.0).unwrap().certified);
        assert!(!certify_ball_cover(1.0, 1.0, 0.5).unwrap().certified);
        assert!(certify_ball_cover(0.4, 1.0, 0.5).unwrap().certified);
        let beyond = certify_nn_cover(0.0, 1.0, 1.0).unwrap();
        assert!(!beyond.certified && beyond.beyond_reach);
        assert!(certify_nn_cover(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn planes_cover_classifies_tube_exactly() {
        let (train, _) = make_planes(GridDensity::Cover(CoverLevel::One), 1).unwrap();
        let spec = train.spec.unwrap();
        let idx = NeighborIndex::new(train.points.clone(), train.labels.clone(), Norm::L2).unwrap();
        let mut rng = substream(21, MC);
        for class in [1, 2] {
            let pts = tube_sample(&spec, class, 0.45, Norm::L2, 2000, TubeLaw::Shell, &mut rng).unwrap();
            for p in pts.rows() {
                assert_eq!(nn_classify(&idx, p).unwrap(), class);
            }
        }
        // No budget is certified for ball training at the measured cover radius.
        for eps in [0.0, 0.1, 0.45, 0.9] {
            assert!(!certify_ball_cover(1.0102, 1.0, eps).unwrap().certified);
        }
    }

    fn random_instance(seed: u64) -> (NeighborIndex, usize) {
        let mut rng = substream(seed, MC);
        let d = rng.random_range(1..=5);
        let n = rng.random_range(2..=50);
        let mut pc = PointCloud::new(d);
        let mut labels = Vec::new();
        for i in 0..n {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            pc.push(&p).unwrap();
            labels.push(if i < 2 { i as ClassId + 1 } else { rng.random_range(1..=3) });
        }
        let norm = if rng.random::<bool>() { Norm::L2 } else { Norm::LInf };
        (NeighborIndex::new(pc, labels, norm).unwrap(), rng.random_range(0..n))
    }

    proptest! {
        #[test]
        fn full_cell_membership_implies_nn_agreement(seed in any::<u64>()) {
            let (idx, anchor) = random_instance(seed);
            let full = constraint_set(&idx, anchor, usize::MAX).unwrap();
            let mut rng = substream(seed ^ 0x55, MC);
            let x = idx.point(anchor).to_vec();
            for _ in 0..50 {
                let q: Vec<f64> = x.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
                if in_voronoi_cell(&x, &q, &full, idx.norm()).unwrap() {
                    let nb = idx.nearest_scan(&q).unwrap();
                    let own = idx.norm().distance(&x, &q);
                    prop_assert!(nb.label == idx.label(anchor) || nb.distance == own);
                }
            }
        }

        #[test]
        fn fewer_rivals_accept_a_superset(seed in any::<u64>(), m in 1usize..4) {
            let (idx, anchor) = random_instance(seed);
            let full = constraint_set(&idx, anchor, usize::MAX).unwrap();
            let partial = constraint_set(&idx, anchor, m).unwrap();
            let x = idx.point(anchor).to_vec();
            let mut rng = substream(seed ^ 0xaa, MC);
            for _ in 0..50 {
                let q: Vec<f64> = x.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
                if in_voronoi_cell(&x, &q, &full, idx.norm()).unwrap() {
                    prop_assert!(in_voronoi_cell(&x, &q, &partial, idx.norm()).unwrap());
                }
            }
        }

        #[test]
        fn tree_agrees_with_scan(seed in any::<u64>()) {
            let (idx, _) = random_instance(seed);
            let mut rng = substream(seed ^ 0x33, MC);
            for _ in 0..20 {
                let q: Vec<f64> = (0..idx.dim()).map(|_| rng.random_range(-4.0..4.0)).collect();
                prop_assert_eq!(idx.nearest(&q).unwrap(), idx.nearest_scan(&q).unwrap());
            }
        }
    }
}
