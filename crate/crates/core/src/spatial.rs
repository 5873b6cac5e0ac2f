//! Static k-d tree over `D`-dimensional points.
//!
//! Built once by median partitioning on an index permutation; splitting axis
//! cycles with depth. Small subtrees are scanned linearly.

use crate::cloud::dist2;

const LEAF_SIZE: usize = 12;

pub struct KdTree<'a, const D: usize> {
    points: &'a [[f64; D]],
    order: Vec<usize>,
}

impl<'a, const D: usize> KdTree<'a, D> {
    pub fn new(points: &'a [[f64; D]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [[f64; D]] {
        self.points
    }

    /// Appends to `out` every index whose point lies within `radius`
    /// (inclusive) of `query`. Order is unspecified.
    pub fn within_radius(&self, query: &[f64; D], radius: f64, out: &mut Vec<usize>) {
        let r2 = radius * radius;
        self.radius_rec(0, self.order.len(), 0, query, radius, r2, &mut |i| out.push(i));
    }

    /// Number of points within `radius` (inclusive) of `query`.
    pub fn count_within(&self, query: &[f64; D], radius: f64) -> usize {
        let mut n = 0;
        self.radius_rec(0, self.order.len(), 0, query, radius, radius * radius, &mut |_| n += 1);
        n
    }

    #[allow(clippy::too_many_arguments)]
    fn radius_rec(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &[f64; D],
        r: f64,
        r2: f64,
        visit: &mut impl FnMut(usize),
    ) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                if dist2(&self.points[i], q) <= r2 {
                    visit(i);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % D;
        let pivot_idx = self.order[mid];
        let pivot = &self.points[pivot_idx];
        if dist2(pivot, q) <= r2 {
            visit(pivot_idx);
        }
        let diff = q[axis] - pivot[axis];
        if diff <= r {
            self.radius_rec(lo, mid, depth + 1, q, r, r2, visit);
        }
        if diff >= -r {
            self.radius_rec(mid + 1, hi, depth + 1, q, r, r2, visit);
        }
    }

    /// Exact nearest neighbor as `(index, squared distance)`; equal distances
    /// resolve to the lowest index.
    pub fn nearest(&self, query: &[f64; D]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, self.order.len(), 0, query, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, lo: usize, hi: usize, depth: usize, q: &[f64; D], best: &mut (usize, f64)) {
        let offer = |i: usize, best: &mut (usize, f64)| {
            let d = dist2(&self.points[i], q);
            if d < best.1 || (d == best.1 && i < best.0) {
                *best = (i, d);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(i, best);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % D;
        let pivot_idx = self.order[mid];
        offer(pivot_idx, best);
        let diff = q[axis] - self.points[pivot_idx][axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(near.0, near.1, depth + 1, q, best);
        if diff * diff <= best.1 {
            self.nearest_rec(far.0, far.1, depth + 1, q, best);
        }
    }
}

fn build<const D: usize>(points: &[[f64; D]], order: &mut [usize], depth: usize) {
    if order.len() <= LEAF_SIZE {
        return;
    }
    let axis = depth % D;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut rest[1..], depth + 1);
}
