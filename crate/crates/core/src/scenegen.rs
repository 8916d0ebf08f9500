//! Synthetic scenes: meshes sampled on their surface, posed, culled against a
//! viewpoint and mixed with uniform clutter.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose9D};
use crate::scalar::{lit, mix64, to_f64, Real, Vec3};

/// Sampling rounds tried before an object is declared invisible.
const MAX_SAMPLING_ROUNDS: usize = 64;

/// Triangle mesh. Faces with (near) zero area are dropped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T: Real> {
    vertices: Vec<Vec3<T>>,
    triangles: Vec<[usize; 3]>,
}

impl<T: Real> Mesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(bad) = triangles.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::invalid(
                "mesh",
                format!("face index {bad} out of range for {n} vertices"),
            ));
        }
        if vertices.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("mesh", "non-finite vertex"));
        }
        let diag = bounds(&vertices)
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or_else(T::zero);
        let tol = T::default_epsilon() * diag * diag;
        let triangles: Vec<_> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() > tol
            })
            .collect();
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(Mesh {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn corners(&self, face: usize) -> [Vec3<T>; 3] {
        self.triangles[face].map(|i| self.vertices[i])
    }

    /// Unit normal following the right-hand winding of the face.
    pub fn face_normal(&self, face: usize) -> Vec3<T> {
        let [a, b, c] = self.corners(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, face: usize) -> T {
        let [a, b, c] = self.corners(face);
        (b - a).cross(&(c - a)).norm() * lit(0.5)
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len()).fold(T::zero(), |acc, f| acc + self.face_area(f))
    }

    pub fn bounds(&self) -> (Vec3<T>, Vec3<T>) {
        bounds(&self.vertices).expect("mesh has faces")
    }

    /// Vertices mapped through `f`. Faces whose winding `f` reverses (a
    /// reflection) keep their index order, so callers should pass proper
    /// motions or positive scalings only.
    pub fn map_vertices<F: Fn(&Vec3<T>) -> Vec3<T>>(&self, f: F) -> Result<Self> {
        Mesh::new(self.vertices.iter().map(f).collect(), self.triangles.clone())
    }

    /// The mesh, assumed to live in the canonical box `[-½, ½]³`, placed by
    /// `pose`.
    pub fn posed(&self, pose: &Pose9D<T>) -> Result<Self> {
        self.map_vertices(|v| pose.object_to_world(v))
    }

    /// Axis-aligned cube `[-½, ½]³`.
    pub fn unit_cube() -> Self {
        let h = lit::<T>(0.5);
        let vertices = (0..8)
            .map(|i| {
                let s = |bit: usize| if i & bit != 0 { h } else { -h };
                Vec3::new(s(1), s(2), s(4))
            })
            .collect();
        let quads = [
            [0, 2, 6, 4],
            [1, 5, 7, 3],
            [0, 4, 5, 1],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 6, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        convex_builtin(vertices, triangles)
    }

    /// Closed cylinder of diameter 1 and height 1, axis along local `y`.
    pub fn cylinder(segments: usize) -> Self {
        let segments = segments.max(3);
        let h = lit::<T>(0.5);
        let mut vertices = vec![Vec3::new(T::zero(), -h, T::zero()), Vec3::new(T::zero(), h, T::zero())];
        for k in 0..segments {
            let (x, z) = ring(k, segments, h);
            vertices.push(Vec3::new(x, -h, z));
            vertices.push(Vec3::new(x, h, z));
        }
        let mut triangles = Vec::new();
        for k in 0..segments {
            let (b0, t0) = (2 + 2 * k, 3 + 2 * k);
            let (b1, t1) = (2 + 2 * ((k + 1) % segments), 3 + 2 * ((k + 1) % segments));
            triangles.push([b0, b1, t1]);
            triangles.push([b0, t1, t0]);
            triangles.push([0, b1, b0]);
            triangles.push([1, t0, t1]);
        }
        convex_builtin(vertices, triangles)
    }

    /// Cone with its apex at `y = ½` over a unit-diameter base at `y = -½`.
    pub fn cone(segments: usize) -> Self {
        let segments = segments.max(3);
        let h = lit::<T>(0.5);
        let mut vertices = vec![Vec3::new(T::zero(), -h, T::zero()), Vec3::new(T::zero(), h, T::zero())];
        for k in 0..segments {
            let (x, z) = ring(k, segments, h);
            vertices.push(Vec3::new(x, -h, z));
        }
        let mut triangles = Vec::new();
        for k in 0..segments {
            let (a, b) = (2 + k, 2 + (k + 1) % segments);
            triangles.push([0, a, b]);
            triangles.push([1, a, b]);
        }
        convex_builtin(vertices, triangles)
    }

    /// Box `[-½, ½] × [-½, 0.1] × [-½, ½]` under a square pyramid roof with its
    /// apex at `y = ½`. Unlike the other builtins it has no symmetry that
    /// swaps up and down.
    pub fn house() -> Self {
        let h = lit::<T>(0.5);
        let eave = lit::<T>(0.1);
        let mut vertices: Vec<Vec3<T>> = (0..8)
            .map(|i| {
                let x = if i & 1 != 0 { h } else { -h };
                let y = if i & 2 != 0 { eave } else { -h };
                let z = if i & 4 != 0 { h } else { -h };
                Vec3::new(x, y, z)
            })
            .collect();
        vertices.push(Vec3::new(T::zero(), h, T::zero()));
        let triangles = vec![
            [0, 2, 6],
            [0, 6, 4],
            [1, 5, 7],
            [1, 7, 3],
            [0, 4, 5],
            [0, 5, 1],
            [0, 1, 3],
            [0, 3, 2],
            [4, 6, 7],
            [4, 7, 5],
            [2, 3, 8],
            [3, 7, 8],
            [7, 6, 8],
            [6, 2, 8],
        ];
        convex_builtin(vertices, triangles)
    }

    /// Latitude-longitude sphere of diameter 1.
    pub fn sphere(stacks: usize, slices: usize) -> Self {
        let (stacks, slices) = (stacks.max(2), slices.max(3));
        let h = lit::<T>(0.5);
        let mut vertices = vec![Vec3::new(T::zero(), h, T::zero()), Vec3::new(T::zero(), -h, T::zero())];
        for i in 1..stacks {
            let theta = std::f64::consts::PI * i as f64 / stacks as f64;
            let (y, r) = (0.5 * theta.cos(), 0.5 * theta.sin());
            for j in 0..slices {
                let phi = std::f64::consts::TAU * j as f64 / slices as f64;
                vertices.push(Vec3::new(lit(r * phi.cos()), lit(y), lit(r * phi.sin())));
            }
        }
        let at = |i: usize, j: usize| 2 + (i - 1) * slices + j % slices;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, at(1, j), at(1, j + 1)]);
            triangles.push([1, at(stacks - 1, j), at(stacks - 1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                triangles.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
                triangles.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
        convex_builtin(vertices, triangles)
    }
}

fn ring<T: Real>(k: usize, n: usize, r: T) -> (T, T) {
    let phi = std::f64::consts::TAU * k as f64 / n as f64;
    (r * lit(phi.cos()), r * lit(phi.sin()))
}

/// Winds every face of a convex, origin-centered mesh outward.
fn convex_builtin<T: Real>(vertices: Vec<Vec3<T>>, mut triangles: Vec<[usize; 3]>) -> Mesh<T> {
    for t in &mut triangles {
        let [a, b, c] = t.map(|i| vertices[i]);
        let centroid = (a + b + c) / lit::<T>(3.0);
        if (b - a).cross(&(c - a)).dot(&centroid) < T::zero() {
            t.swap(1, 2);
        }
    }
    Mesh::new(vertices, triangles).expect("builtin mesh is valid")
}

fn bounds<T: Real>(points: &[Vec3<T>]) -> Option<(Vec3<T>, Vec3<T>)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Named meshes a [`SceneSpec`] can refer to.
pub type MeshLibrary<T> = BTreeMap<String, Mesh<T>>;

/// `cube`, `cylinder`, `cone`, `sphere` and `house`, each filling `[-½, ½]³`.
pub fn builtin_library<T: Real>() -> MeshLibrary<T> {
    let mut lib = BTreeMap::new();
    lib.insert("cube".to_string(), Mesh::unit_cube());
    lib.insert("cylinder".to_string(), Mesh::cylinder(64));
    lib.insert("cone".to_string(), Mesh::cone(64));
    lib.insert("sphere".to_string(), Mesh::sphere(24, 48));
    lib.insert("house".to_string(), Mesh::house());
    lib
}

/// Area-weighted uniform samples on the surface, each carrying its face
/// normal. The viewpoint of the result is the origin.
pub fn sample_surface<T: Real>(mesh: &Mesh<T>, n: usize, seed: u64) -> Result<PointCloud<T>> {
    if n == 0 {
        return Err(Error::invalid("sample count", "must be at least 1"));
    }
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .map(|f| to_f64(mesh.face_area(f)))
        .collect();
    let faces = WeightedIndex::new(&areas).map_err(|_| Error::EmptyMesh)?;
    let normals_by_face: Vec<Vec3<T>> = (0..areas.len()).map(|f| mesh.face_normal(f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let f = faces.sample(&mut rng);
        let [a, b, c] = mesh.corners(f);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push(a * lit::<T>(wa) + b * lit::<T>(wb) + c * lit::<T>(wc));
        normals.push(normals_by_face[f]);
    }
    PointCloud::new(points, normals, Vec3::zeros())
}

/// Points whose normal faces the viewpoint: `n·(viewpoint − p) > 0`.
pub fn cull_backfaces<T: Real>(cloud: &PointCloud<T>, viewpoint: &Vec3<T>) -> PointCloud<T> {
    let keep: Vec<usize> = visible_indices(cloud, viewpoint);
    let mut out = cloud.select(&keep);
    out.viewpoint = *viewpoint;
    out
}

fn visible_indices<T: Real>(cloud: &PointCloud<T>, viewpoint: &Vec3<T>) -> Vec<usize> {
    (0..cloud.len())
        .filter(|&i| cloud.normals[i].dot(&(viewpoint - cloud.points[i])) > T::zero())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject<T: Real> {
    pub mesh: String,
    pub pose: Pose9D<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec<T: Real> {
    pub objects: Vec<SceneObject<T>>,
    pub viewpoint: Vec3<T>,
    /// Visible points per object, counted after culling.
    pub samples_per_object: usize,
    pub outlier_count: usize,
    /// Outliers fill the objects' bounding box scaled by this factor about
    /// its center.
    pub outlier_box_scale: T,
    pub seed: u64,
}

impl<T: Real> SceneSpec<T> {
    pub fn validate(&self, library: &MeshLibrary<T>) -> Result<()> {
        for (k, o) in self.objects.iter().enumerate() {
            if !library.contains_key(&o.mesh) {
                return Err(Error::invalid("scene", format!("object {k}: unknown mesh {:?}", o.mesh)));
            }
            Pose9D::new(o.pose.t, o.pose.e1, o.pose.e2, o.pose.s)
                .map_err(|e| Error::invalid("scene", format!("object {k}: {e}")))?;
        }
        if !(self.outlier_box_scale > T::zero()) {
            return Err(Error::invalid("outlier_box_scale", "must be positive"));
        }
        if self.outlier_count > 0 && (self.objects.is_empty() || self.samples_per_object == 0) {
            return Err(Error::invalid("scene", "outliers need at least one sampled object"));
        }
        Ok(())
    }
}

/// Generated scene. Points are grouped by object in spec order, followed by
/// the outliers.
#[derive(Debug, Clone)]
pub struct Scene<T: Real> {
    pub cloud: PointCloud<T>,
    pub poses: Vec<Pose9D<T>>,
    /// Object index per point, `-1` for outliers.
    pub labels: Vec<i32>,
}

/// Samples, poses and culls each object, then adds uniform outliers.
pub fn build_scene<T: Real>(spec: &SceneSpec<T>, library: &MeshLibrary<T>) -> Result<Scene<T>> {
    spec.validate(library)?;
    let parts: Vec<PointCloud<T>> = spec
        .objects
        .par_iter()
        .enumerate()
        .map(|(k, o)| {
            let mesh = library[&o.mesh].posed(&o.pose)?;
            visible_samples(&mesh, spec, k)
        })
        .collect::<Result<_>>()?;

    let mut cloud = PointCloud::empty(spec.viewpoint);
    let mut labels = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        cloud.extend(part);
        labels.extend(std::iter::repeat_n(k as i32, part.len()));
    }
    if spec.outlier_count > 0 {
        let (lo, hi) = cloud.bounds().expect("objects were sampled");
        let center = (lo + hi) * lit::<T>(0.5);
        let half = (hi - lo) * (spec.outlier_box_scale * lit(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(spec.seed ^ 0x6f75_746c_6965_7273));
        let mut points = Vec::with_capacity(spec.outlier_count);
        let mut normals = Vec::with_capacity(spec.outlier_count);
        for _ in 0..spec.outlier_count {
            let u = Vec3::from_fn(|_, _| lit::<T>(rng.random_range(-1.0..=1.0)));
            points.push(center + half.component_mul(&u));
            normals.push(random_unit(&mut rng));
        }
        cloud.extend(&PointCloud::new(points, normals, spec.viewpoint)?);
        labels.extend(std::iter::repeat_n(-1, spec.outlier_count));
    }
    Ok(Scene {
        cloud,
        poses: spec.objects.iter().map(|o| o.pose).collect(),
        labels,
    })
}

fn visible_samples<T: Real>(mesh: &Mesh<T>, spec: &SceneSpec<T>, object: usize) -> Result<PointCloud<T>> {
    let n = spec.samples_per_object;
    let mut out = PointCloud::empty(spec.viewpoint);
    if n == 0 {
        return Ok(out);
    }
    let batch = (2 * n).max(1024);
    for round in 0..MAX_SAMPLING_ROUNDS {
        let seed = mix64(spec.seed ^ mix64(((object as u64) << 32) | round as u64));
        let kept = cull_backfaces(&sample_surface(mesh, batch, seed)?, &spec.viewpoint);
        let take = (n - out.len()).min(kept.len());
        out.extend(&kept.select(&(0..take).collect::<Vec<_>>()));
        if out.len() == n {
            return Ok(out);
        }
    }
    Err(Error::invalid(
        "scene",
        format!("object {object} shows too little surface to the viewpoint"),
    ))
}

fn random_unit<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Vec3<T> {
    loop {
        let v = Vec3::<f64>::from_fn(|_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return (v / n).map(lit);
        }
    }
}

/// Outliers to add to `object_points` so they make up `fraction` of the
/// total, rounded to the nearest count.
pub fn outliers_for_fraction(object_points: usize, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid("outlier fraction", "must lie in [0, 1)"));
    }
    Ok((object_points as f64 * fraction / (1.0 - fraction)).round() as usize)
}
