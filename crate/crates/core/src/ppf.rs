//! Oriented point pairs, the four-component pair feature and the
//! triangle-based local descriptor consumed by learned predictors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::{angle_between, lit, safe_acos, Real, Vec3};
use crate::spatial::KdTree;

/// Pairs are drawn in fixed-size chunks, each from its own random stream,
/// so any shard of the pair list can be regenerated independently.
pub const PAIR_CHUNK: usize = 4096;

/// Two oriented points with `n1` canonicalized so that `n1·(p2 − p1) <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair<T: Real> {
    pub i: usize,
    pub j: usize,
    pub p1: Vec3<T>,
    pub p2: Vec3<T>,
    pub n1: Vec3<T>,
    pub n2: Vec3<T>,
}

impl<T: Real> PointPair<T> {
    /// Builds a pair and flips `n1` if it points along `p2 − p1`.
    pub fn new(
        i: usize,
        j: usize,
        p1: Vec3<T>,
        p2: Vec3<T>,
        n1: Vec3<T>,
        n2: Vec3<T>,
    ) -> Result<Self> {
        let d = p2 - p1;
        if d.norm_squared() <= T::zero() {
            return Err(Error::DegeneratePair);
        }
        let n1 = if n1.dot(&d) > T::zero() { -n1 } else { n1 };
        Ok(PointPair {
            i,
            j,
            p1,
            p2,
            n1,
            n2,
        })
    }

    pub fn from_cloud(cloud: &PointCloud<T>, i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::DegeneratePair);
        }
        Self::new(
            i,
            j,
            cloud.points[i],
            cloud.points[j],
            cloud.normals[i],
            cloud.normals[j],
        )
    }

    pub fn d(&self) -> Vec3<T> {
        self.p2 - self.p1
    }

    /// Unit direction from `p1` to `p2`.
    pub fn direction(&self) -> Vec3<T> {
        self.d().normalize()
    }
}

/// Distance and the three angles of an oriented pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpfDescriptor<T: Real> {
    pub dist: T,
    pub angle_n1_d: T,
    pub angle_n2_d: T,
    pub angle_n1_n2: T,
}

impl<T: Real> PpfDescriptor<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.dist, self.angle_n1_d, self.angle_n2_d, self.angle_n1_n2]
    }
}

pub fn compute_ppf<T: Real>(pair: &PointPair<T>) -> Result<PpfDescriptor<T>> {
    let d = pair.d();
    let dist = d.norm();
    if dist <= T::zero() {
        return Err(Error::DegeneratePair);
    }
    Ok(PpfDescriptor {
        dist,
        angle_n1_d: angle_between(&pair.n1, &d),
        angle_n2_d: angle_between(&pair.n2, &d),
        angle_n1_n2: angle_between(&pair.n1, &pair.n2),
    })
}

/// `n_pairs` ordered pairs of distinct indices, uniform with replacement.
/// Pairs whose points coincide are redrawn.
pub fn sample_pairs<T: Real>(
    cloud: &PointCloud<T>,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<PointPair<T>>> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::CannotPair(n));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for chunk in 0..n_pairs.div_ceil(PAIR_CHUNK) {
        let mut rng = pair_stream(seed, chunk);
        let len = PAIR_CHUNK.min(n_pairs - chunk * PAIR_CHUNK);
        for _ in 0..len {
            pairs.push(draw_pair(cloud, &mut rng)?);
        }
    }
    Ok(pairs)
}

fn pair_stream(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn draw_pair<T: Real>(cloud: &PointCloud<T>, rng: &mut ChaCha8Rng) -> Result<PointPair<T>> {
    let n = cloud.len();
    for _ in 0..1000 {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if let Ok(pair) = PointPair::from_cloud(cloud, i, j) {
            return Ok(pair);
        }
    }
    Err(Error::DegeneratePair)
}

/// Sides and interior angles of one triangle.
///
/// Vertices are `(p, q, c)`: the point, one of its neighbors, and the
/// neighbor centroid. `sides = [|q−p|, |c−q|, |c−p|]`, `angles` are at
/// `[p, q, c]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle<T: Real> {
    pub sides: [T; 3],
    pub angles: [T; 3],
    pub zero_area: bool,
}

impl<T: Real> Triangle<T> {
    pub fn from_vertices(p: &Vec3<T>, q: &Vec3<T>, c: &Vec3<T>) -> Self {
        let sides = [(q - p).norm(), (c - q).norm(), (c - p).norm()];
        let longest = sides[0].max(sides[1]).max(sides[2]);
        let area2 = (q - p).cross(&(c - p)).norm();
        let zero_area = longest <= T::zero() || area2 <= longest * longest * lit(1e-12);
        let corner = |a: &Vec3<T>, b: &Vec3<T>, o: &Vec3<T>| -> T {
            let u = a - o;
            let v = b - o;
            let den = u.norm() * v.norm();
            if den <= T::zero() {
                T::zero()
            } else {
                safe_acos(u.dot(&v) / den)
            }
        };
        let mut angles = [corner(q, c, p), corner(p, c, q), corner(p, q, c)];
        if zero_area && angles.iter().all(|a| *a == T::zero()) {
            // fully collapsed: report a flat triangle
            angles = [T::zero(), T::zero(), T::pi()];
        }
        Triangle {
            sides,
            angles,
            zero_area,
        }
    }
}

/// Per-neighbor triangles around one point, in nearest-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptor<T: Real> {
    pub triangles: Vec<Triangle<T>>,
}

impl<T: Real> LocalDescriptor<T> {
    pub fn zero_area(&self) -> bool {
        self.triangles.iter().any(|t| t.zero_area)
    }
}

/// Local descriptor of point `index` using its `k` nearest neighbors.
pub fn compute_local_descriptor<T: Real>(
    cloud: &PointCloud<T>,
    index: usize,
    k: usize,
) -> Result<LocalDescriptor<T>> {
    let tree = KdTree::new(&cloud.points);
    local_descriptor_with(&tree, index, k)
}

/// Same as [`compute_local_descriptor`] with a prebuilt tree.
pub fn local_descriptor_with<T: Real>(
    tree: &KdTree<T>,
    index: usize,
    k: usize,
) -> Result<LocalDescriptor<T>> {
    if tree.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            got: tree.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k", "need at least one neighbor"));
    }
    let p = *tree.point(index);
    let neigh = tree.knn(&p, k, Some(index));
    let centroid: Vec3<T> = neigh
        .iter()
        .fold(Vec3::zeros(), |acc: Vec3<T>, &(j, _)| acc + tree.point(j))
        / lit::<T>(k as f64);
    let triangles = neigh
        .iter()
        .map(|&(j, _)| Triangle::from_vertices(&p, tree.point(j), &centroid))
        .collect();
    Ok(LocalDescriptor { triangles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, RigidTransform};
    use std::f64::consts::PI;

    fn pair(p1: Vec3<f64>, p2: Vec3<f64>, n1: Vec3<f64>, n2: Vec3<f64>) -> PointPair<f64> {
        PointPair::new(0, 1, p1, p2, n1, n2).unwrap()
    }

    #[test]
    fn ppf_of_orthogonal_normals() {
        let p = pair(Vec3::zeros(), Vec3::x(), Vec3::z(), Vec3::z());
        let f = compute_ppf(&p).unwrap();
        assert_eq!(f.dist, 1.0);
        assert!((f.angle_n1_d - PI / 2.0).abs() < 1e-12);
        assert!((f.angle_n2_d - PI / 2.0).abs() < 1e-12);
        assert!(f.angle_n1_n2.abs() < 1e-12);
    }

    #[test]
    fn antiparallel_normals_give_pi() {
        let n1 = Vec3::new(-1.0, 0.5, 0.2).normalize();
        let p = pair(Vec3::zeros(), Vec3::x(), n1, -n1);
        let f = compute_ppf(&p).unwrap();
        assert!((f.angle_n1_n2 - PI).abs() < 1e-9);
    }

    #[test]
    fn canonical_flip() {
        let p = pair(Vec3::zeros(), Vec3::x(), Vec3::x(), Vec3::z());
        assert_eq!(p.n1, -Vec3::x());
        assert!(p.n1.dot(&p.d()) < 0.0);
        assert!(PointPair::<f64>::new(0, 1, Vec3::x(), Vec3::x(), Vec3::z(), Vec3::z()).is_err());
    }

    fn small_cloud(n: usize) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts = (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let normals = (0..n)
            .map(|_| Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 1.0))
            .collect();
        PointCloud::new(pts, normals, Vec3::zeros()).unwrap()
    }

    #[test]
    fn two_point_cloud_pairs_are_forced() {
        let c = small_cloud(2);
        let pairs = sample_pairs(&c, 5, 1).unwrap();
        assert_eq!(pairs.len(), 5);
        for p in pairs {
            assert!((p.i, p.j) == (0, 1) || (p.i, p.j) == (1, 0));
        }
        assert!(matches!(
            sample_pairs(&small_cloud(1), 3, 0),
            Err(Error::CannotPair(1))
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_canonical() {
        let c = small_cloud(100);
        let a = sample_pairs(&c, 10_000, 42).unwrap();
        let b = sample_pairs(&c, 10_000, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_pairs(&c, 10_000, 43).unwrap());
        assert!(a.iter().all(|p| p.i != p.j && p.n1.dot(&p.d()) <= 0.0));
    }

    #[test]
    fn index_marginal_is_uniform() {
        let c = small_cloud(1000);
        let pairs = sample_pairs(&c, 100_000, 7).unwrap();
        let mut counts = vec![0usize; 1000];
        for p in &pairs {
            counts[p.i] += 1;
            counts[p.j] += 1;
        }
        // 2e5 draws over 1000 indices: expectation 200, sd ≈ sqrt(200)
        let expected = 200.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square with 999 dof: mean 999, sd ≈ 44.7
        assert!((chi2 - 999.0).abs() < 3.0 * 44.7, "chi2 = {chi2}");
        let sd = expected.sqrt();
        let outliers = counts
            .iter()
            .filter(|&&c| (c as f64 - expected).abs() > 4.0 * sd)
            .count();
        assert!(outliers <= 1);
    }

    #[test]
    fn swapping_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let p1 = Vec3::new(rng.random(), rng.random(), rng.random());
            let p2 = Vec3::new(rng.random(), rng.random(), rng.random());
            let n1 = Vec3::new(rng.random::<f64>() - 0.5, rng.random(), rng.random()).normalize();
            let n2 = Vec3::new(rng.random(), rng.random::<f64>() - 0.5, rng.random()).normalize();
            // raw descriptor (no canonical flip) to test the exchange identity
            let d = p2 - p1;
            let fwd = [angle_between(&n1, &d), angle_between(&n2, &d)];
            let back = [angle_between(&n2, &(-d)), angle_between(&n1, &(-d))];
            assert!((back[0] - (PI - fwd[1])).abs() < 1e-9);
            assert!((back[1] - (PI - fwd[0])).abs() < 1e-9);
            let a = compute_ppf(&pair(p1, p2, n1, n2)).unwrap();
            let b = compute_ppf(&pair(p2, p1, n2, n1)).unwrap();
            assert!((a.dist - b.dist).abs() < 1e-15);
        }
    }

    #[test]
    fn equilateral_triangle_angles() {
        let t = Triangle::from_vertices(
            &Vec3::new(0.0, 0.0, 0.0),
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
        );
        for a in t.angles {
            assert!((a - PI / 3.0).abs() < 1e-6);
        }
        assert!(!t.zero_area);
    }

    #[test]
    fn local_descriptor_triangles_are_valid() {
        let c = small_cloud(300);
        for idx in [0usize, 17, 299] {
            let desc = compute_local_descriptor(&c, idx, 10).unwrap();
            assert_eq!(desc.triangles.len(), 10);
            for t in &desc.triangles {
                let [a, b, cc] = t.sides;
                assert!(a <= b + cc + 1e-12 && b <= a + cc + 1e-12 && cc <= a + b + 1e-12);
                let sum: f64 = t.angles.iter().sum();
                assert!((sum - PI).abs() < 1e-6, "sum {sum}");
            }
        }
    }

    #[test]
    fn local_descriptor_is_rigid_invariant() {
        let c = small_cloud(200);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xf = RigidTransform::random(&mut rng, 2.0);
        let moved = apply_transform(&c, &xf);
        for idx in 0..20 {
            let a = compute_local_descriptor(&c, idx, 8).unwrap();
            let b = compute_local_descriptor(&moved, idx, 8).unwrap();
            for (x, y) in a.triangles.iter().zip(&b.triangles) {
                for k in 0..3 {
                    assert!((x.sides[k] - y.sides[k]).abs() < 1e-9);
                    assert!((x.angles[k] - y.angles[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn point_at_centroid_is_flagged() {
        let pts: Vec<Vec3<f64>> = vec![
            Vec3::zeros(),
            Vec3::x(),
            -Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
        ];
        let c = PointCloud::new(pts, vec![Vec3::z(); 5], Vec3::zeros()).unwrap();
        let desc = compute_local_descriptor(&c, 0, 4).unwrap();
        assert!(desc.zero_area());
    }
}
