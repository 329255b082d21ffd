// Exact kd-tree over a PointCloud. Results must agree with a linear scan,
// including the lowest-index tie-break, so subtrees whose bound equals the
// current best are still visited.

use alloc::vec::Vec;

use crate::linalg::{Norm, PointCloud};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl KdTree {
    pub(crate) fn build(points: &PointCloud) -> KdTree {
        let mut tree = KdTree { nodes: Vec::new(), order: (0..points.len()).collect() };
        if !points.is_empty() {
            tree.build_node(points, 0, points.len());
        }
        tree
    }

    fn build_node(&mut self, points: &PointCloud, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let dim = points.dim();
        let mut best_axis = 0;
        let mut best_spread = 0.0;
        for axis in 0..dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = points.row(i)[axis];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= 0.0 {
            return id;
        }
        let slice = &mut self.order[start..end];
        slice.sort_by(|&a, &b| {
            points.row(a)[best_axis]
                .total_cmp(&points.row(b)[best_axis])
                .then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        let value = points.row(self.order[mid])[best_axis];
        let left = self.build_node(points, start, mid);
        let right = self.build_node(points, mid, end);
        self.nodes[id] = Node::Split { axis: best_axis, value, left, right };
        id
    }

    /// Nearest point as (index, comparison distance), lowest index on ties.
    pub(crate) fn nearest(&self, points: &PointCloud, query: &[f64], norm: Norm) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, points, query, norm, &mut best);
        Some(best)
    }

    fn nearest_in(&self, node: usize, points: &PointCloud, query: &[f64], norm: Norm, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = norm.cmp_distance(points.row(i), query);
                    if c < best.1 || (c == best.1 && i < best.0) {
                        *best = (i, c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, points, query, norm, best);
                if norm.to_cmp(diff.abs()) <= best.1 {
                    self.nearest_in(far, points, query, norm, best);
                }
            }
        }
    }

    /// True when some point lies within comparison distance `radius_cmp`.
    pub(crate) fn any_within(&self, points: &PointCloud, query: &[f64], norm: Norm, radius_cmp: f64) -> bool {
        !self.nodes.is_empty() && self.any_within_in(0, points, query, norm, radius_cmp)
    }

    fn any_within_in(&self, node: usize, points: &PointCloud, query: &[f64], norm: Norm, radius_cmp: f64) -> bool {
        match self.nodes[node] {
            Node::Leaf { start, end } => self.order[start..end]
                .iter()
                .any(|&i| norm.cmp_distance(points.row(i), query) <= radius_cmp),
            Node::Split { axis, value, left, right } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.any_within_in(near, points, query, norm, radius_cmp)
                    || (norm.to_cmp(diff.abs()) <= radius_cmp
                        && self.any_within_in(far, points, query, norm, radius_cmp))
            }
        }
    }
}
