//! Point clouds, poses, rigid transforms and the basic cloud filters.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real, Vec3};
use crate::spatial::KdTree;

/// Oriented points with the viewpoint used to orient the normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Real> {
    pub points: Vec<Vec3<T>>,
    pub normals: Vec<Vec3<T>>,
    pub viewpoint: Vec3<T>,
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud, normalizing the normals. Lengths must match.
    pub fn new(points: Vec<Vec3<T>>, normals: Vec<Vec3<T>>, viewpoint: Vec3<T>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::invalid(
                "point cloud",
                format!("{} points but {} normals", points.len(), normals.len()),
            ));
        }
        let normals = normals
            .into_iter()
            .map(|n| n.try_normalize(T::zero()).unwrap_or_else(Vec3::z))
            .collect();
        Ok(PointCloud {
            points,
            normals,
            viewpoint,
        })
    }

    pub fn empty(viewpoint: Vec3<T>) -> Self {
        PointCloud {
            points: Vec::new(),
            normals: Vec::new(),
            viewpoint,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tightest axis-aligned box `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    /// Sub-cloud with the given point indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
            viewpoint: self.viewpoint,
        }
    }

    /// Concatenates `other` onto `self`; the viewpoint of `self` is kept.
    pub fn extend(&mut self, other: &PointCloud<T>) {
        self.points.extend_from_slice(&other.points);
        self.normals.extend_from_slice(&other.normals);
    }
}

/// Rotation plus translation, `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> RigidTransform<T> {
    /// Validates `RᵀR = I` and `det R = 1`.
    pub fn new(rotation: Matrix3<T>, translation: Vec3<T>) -> Result<Self> {
        let tol = Self::tolerance();
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > tol || (det - T::one()).abs() > tol {
            return Err(Error::invalid(
                "rigid transform",
                "rotation is not orthonormal with determinant +1",
            ));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    fn tolerance() -> T {
        let eps = T::default_epsilon() * lit(100.0);
        if eps > lit(1e-9) {
            eps
        } else {
            lit(1e-9)
        }
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: &Vec3<T>, angle: T, translation: Vec3<T>) -> Self {
        let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle);
        RigidTransform {
            rotation: rot.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Uniformly random rotation with a translation in `[-extent, extent]³`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, extent: T) -> Self {
        let rotation = random_rotation(rng);
        let e = crate::scalar::to_f64(extent);
        let translation = Vec3::new(
            lit(rng.random_range(-e..=e)),
            lit(rng.random_range(-e..=e)),
            lit(rng.random_range(-e..=e)),
        );
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn apply_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        self.rotation * v
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform<T>) -> Self {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Uniform random rotation from a normalized Gaussian quaternion.
pub fn random_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Matrix3<T> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            let quat = nalgebra::Quaternion::new(lit(q[0]), lit(q[1]), lit(q[2]), lit(q[3]));
            return UnitQuaternion::from_quaternion(quat)
                .to_rotation_matrix()
                .into_inner();
        }
    }
}

/// Object pose: center, up axis `e1`, right axis `e2`, and full box extents.
///
/// The object frame is right-handed with local `x` = right (`e2`), local `y`
/// = up (`e1`) and local `z` = `e2 × e1`. Extents `s` follow that local order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose9D<T: Real> {
    pub t: Vec3<T>,
    pub e1: Vec3<T>,
    pub e2: Vec3<T>,
    pub s: Vec3<T>,
}

impl<T: Real> Pose9D<T> {
    pub fn new(t: Vec3<T>, e1: Vec3<T>, e2: Vec3<T>, s: Vec3<T>) -> Result<Self> {
        let eps = T::validation_eps();
        if (e1.norm() - T::one()).abs() > eps || (e2.norm() - T::one()).abs() > eps {
            return Err(Error::invalid("pose", "axes must be unit vectors"));
        }
        if e1.dot(&e2).abs() > eps {
            return Err(Error::invalid("pose", "axes must be orthogonal"));
        }
        if s.iter().any(|&x| x <= T::zero()) {
            return Err(Error::invalid("pose", "scale must be positive"));
        }
        Ok(Pose9D { t, e1, e2, s })
    }

    /// Pose from an object-to-world rotation whose columns are
    /// (right, up, front).
    pub fn from_rotation(rotation: &Matrix3<T>, t: Vec3<T>, s: Vec3<T>) -> Self {
        Pose9D {
            t,
            e1: rotation.column(1).into_owned(),
            e2: rotation.column(0).into_owned(),
            s,
        }
    }

    pub fn e3(&self) -> Vec3<T> {
        self.e2.cross(&self.e1)
    }

    /// Object-to-world rotation, columns `(e2, e1, e2 × e1)`.
    pub fn rotation(&self) -> Matrix3<T> {
        Matrix3::from_columns(&[self.e2, self.e1, self.e3()])
    }

    /// Maps a point of the canonical unit box `[-½, ½]³` into the world.
    pub fn object_to_world(&self, local: &Vec3<T>) -> Vec3<T> {
        self.rotation() * local.component_mul(&self.s) + self.t
    }

    pub fn transformed(&self, xf: &RigidTransform<T>) -> Self {
        Pose9D {
            t: xf.apply_point(&self.t),
            e1: xf.apply_vector(&self.e1),
            e2: xf.apply_vector(&self.e2),
            s: self.s,
        }
    }

    pub fn volume(&self) -> T {
        self.s.x * self.s.y * self.s.z
    }
}

/// Result of [`estimate_normals`]: the oriented cloud plus the indices whose
/// neighborhood was rank-deficient and got the viewpoint fallback.
#[derive(Debug, Clone)]
pub struct EstimatedNormals<T: Real> {
    pub cloud: PointCloud<T>,
    pub degenerate: Vec<usize>,
}

/// PCA normals from each point and its `k` nearest neighbors, oriented
/// toward `viewpoint`.
pub fn estimate_normals<T: Real>(
    points: &[Vec3<T>],
    viewpoint: Vec3<T>,
    k: usize,
) -> Result<EstimatedNormals<T>> {
    if k < 3 {
        return Err(Error::invalid("k", format!("need k >= 3, got {k}")));
    }
    if points.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            got: points.len(),
        });
    }
    let tree = KdTree::new(points);
    let mut normals = Vec::with_capacity(points.len());
    let mut degenerate = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let neigh = tree.knn(p, k, Some(i));
        let mut members: Vec<Vec3<T>> = neigh.iter().map(|&(j, _)| points[j]).collect();
        members.push(*p);
        let toward_view = viewpoint - p;
        match pca_normal(&members) {
            Some(mut n) => {
                if n.dot(&toward_view) < T::zero() {
                    n = -n;
                }
                normals.push(n);
            }
            None => {
                degenerate.push(i);
                normals.push(toward_view.try_normalize(T::zero()).unwrap_or_else(Vec3::z));
            }
        }
    }
    Ok(EstimatedNormals {
        cloud: PointCloud {
            points: points.to_vec(),
            normals,
            viewpoint,
        },
        degenerate,
    })
}

/// Eigenvector of the smallest covariance eigenvalue, `None` when the
/// covariance has rank < 2.
fn pca_normal<T: Real>(members: &[Vec3<T>]) -> Option<Vec3<T>> {
    let n: T = lit(members.len() as f64);
    let mean = members.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in members {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if largest <= T::zero() || middle <= largest * lit(1e-10) {
        return None;
    }
    eig.eigenvectors
        .column(order[0])
        .into_owned()
        .try_normalize(T::zero())
}

/// One point per occupied voxel: the centroid of the voxel's points with the
/// renormalized mean normal. Output is ordered by voxel key.
pub fn voxel_downsample<T: Real>(cloud: &PointCloud<T>, resolution: T) -> Result<PointCloud<T>> {
    if resolution <= T::zero() {
        return Err(Error::invalid("resolution", "must be positive"));
    }
    let mut cells: HashMap<[i64; 3], (Vec3<T>, Vec3<T>, usize)> = HashMap::new();
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        let key = voxel_key(p, resolution);
        let e = cells.entry(key).or_insert((Vec3::zeros(), Vec3::zeros(), 0));
        e.0 += p;
        e.1 += n;
        e.2 += 1;
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut out = PointCloud::empty(cloud.viewpoint);
    for key in keys {
        let (ps, ns, count) = cells[&key];
        let centroid: Vec3<T> = ps / lit::<T>(count as f64);
        let normal = ns
            .try_normalize(T::zero())
            .or_else(|| (cloud.viewpoint - centroid).try_normalize(T::zero()))
            .unwrap_or_else(Vec3::z);
        out.points.push(centroid);
        out.normals.push(normal);
    }
    Ok(out)
}

/// Integer voxel coordinates of `p` at the given resolution.
pub fn voxel_key<T: Real>(p: &Vec3<T>, resolution: T) -> [i64; 3] {
    std::array::from_fn(|a| {
        (p[a] / resolution)
            .floor()
            .to_i64()
            .expect("finite voxel coordinate")
    })
}

/// Independent uniform per-axis displacement in `[-magnitude, magnitude]`.
pub fn jitter<T: Real>(cloud: &PointCloud<T>, magnitude: T, seed: u64) -> PointCloud<T> {
    if magnitude <= T::zero() {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = crate::scalar::to_f64(magnitude);
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let offset: Vec3<T> = Vec3::new(
                lit(rng.random_range(-m..=m)),
                lit(rng.random_range(-m..=m)),
                lit(rng.random_range(-m..=m)),
            );
            p + offset
        })
        .collect();
    PointCloud {
        points,
        normals: cloud.normals.clone(),
        viewpoint: cloud.viewpoint,
    }
}

pub fn apply_transform<T: Real>(cloud: &PointCloud<T>, xf: &RigidTransform<T>) -> PointCloud<T> {
    PointCloud {
        points: cloud.points.iter().map(|p| xf.apply_point(p)).collect(),
        normals: cloud.normals.iter().map(|n| xf.apply_vector(n)).collect(),
        viewpoint: xf.apply_point(&cloud.viewpoint),
    }
}
