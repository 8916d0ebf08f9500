//! Static 3-d tree for k-nearest-neighbor and radius queries.

use crate::scalar::{Real, Vec3};

/// Balanced kd-tree stored implicitly: the median of every index range is
/// the node, its split axis lives in `axes` at the same position.
#[derive(Debug, Clone)]
pub struct KdTree<T: Real> {
    points: Vec<Vec3<T>>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes, 0);
        KdTree {
            points: points.to_vec(),
            order,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Vec3<T> {
        &self.points[index]
    }

    /// The `k` nearest points to `query` as `(index, squared distance)`,
    /// closest first. Equal distances are ordered by index. `exclude` skips
    /// one index (typically the query point itself).
    pub fn knn(&self, query: &Vec3<T>, k: usize, exclude: Option<usize>) -> Vec<(usize, T)> {
        let mut best: Vec<(usize, T)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        self.knn_rec(0, self.order.len(), query, k, exclude, &mut best);
        best
    }

    /// Closest point to `query`, smallest index on ties.
    pub fn nearest(&self, query: &Vec3<T>) -> Option<(usize, T)> {
        self.knn(query, 1, None).into_iter().next()
    }

    /// Indices of all points with squared distance `<= radius²`, ascending.
    pub fn within_radius(&self, query: &Vec3<T>, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_rec(0, self.order.len(), query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn knn_rec(
        &self,
        lo: usize,
        hi: usize,
        q: &Vec3<T>,
        k: usize,
        exclude: Option<usize>,
        best: &mut Vec<(usize, T)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if exclude != Some(idx) {
            let d2 = (p - q).norm_squared();
            insert_bounded(best, k, (idx, d2));
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (first, second) = if diff <= T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(first.0, first.1, q, k, exclude, best);
        let worst = if best.len() < k {
            None
        } else {
            best.last().map(|b| b.1)
        };
        if worst.is_none_or(|w| diff * diff <= w) {
            self.knn_rec(second.0, second.1, q, k, exclude, best);
        }
    }

    fn radius_rec(&self, lo: usize, hi: usize, q: &Vec3<T>, r2: T, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if (p - q).norm_squared() <= r2 {
            out.push(idx);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        if diff <= T::zero() || diff * diff <= r2 {
            self.radius_rec(lo, mid, q, r2, out);
        }
        if diff >= T::zero() || diff * diff <= r2 {
            self.radius_rec(mid + 1, hi, q, r2, out);
        }
    }
}

fn insert_bounded<T: Real>(best: &mut Vec<(usize, T)>, k: usize, item: (usize, T)) {
    let before = |a: &(usize, T), b: &(usize, T)| a.1 < b.1 || (a.1 == b.1 && a.0 < b.0);
    if best.len() == k {
        match best.last() {
            Some(last) if before(&item, last) => {
                best.pop();
            }
            _ => return,
        }
    }
    let pos = best.iter().position(|b| before(&item, b)).unwrap_or(best.len());
    best.insert(pos, item);
}

fn build<T: Real>(points: &[Vec3<T>], order: &mut [usize], axes: &mut [u8], _depth: usize) {
    if order.len() <= 1 {
        return;
    }
    // split on the axis of largest spread
    let mut lo = Vec3::repeat(T::max_value().unwrap());
    let mut hi = -lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let spread = hi - lo;
    let axis = spread.imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(points, left, left_axes, _depth + 1);
    build(points, &mut rest[1..], &mut rest_axes[1..], _depth + 1);
}
