//! Candidate generation on the circle (centers) and cone (axes) that a
//! single pair's statistics leave open.

use crate::ppf::PointPair;
use crate::scalar::{lit, to_f64, Real, Vec3};

/// Orthonormal `(u, v)` completing `dir` to a right-handed frame.
///
/// `u = normalize(dir × a)` with `a = z`, or `a = y` when `dir` is within
/// about 25° of `z`; `v = dir × u`.
pub fn circle_frame<T: Real>(dir: &Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let a = if dir.z.abs() > lit(0.9) {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = dir.cross(&a).normalize();
    let v = dir.cross(&u);
    (u, v)
}

/// Precomputed `cos(2πm/K)`, `sin(2πm/K)` for `m = 0..K`.
#[derive(Debug, Clone)]
pub struct CircleTable<T: Real> {
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> CircleTable<T> {
    pub fn new(k: usize) -> Self {
        let (cos, sin) = (0..k)
            .map(|m| {
                let phi = std::f64::consts::TAU * m as f64 / k as f64;
                (lit::<T>(phi.cos()), lit::<T>(phi.sin()))
            })
            .unzip();
        CircleTable { cos, sin }
    }

    pub fn len(&self) -> usize {
        self.cos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cos.is_empty()
    }

    /// Calls `f` on every point `center + radius (cos φ u + sin φ v)`.
    #[inline]
    pub fn for_each_on_circle<F: FnMut(Vec3<T>)>(
        &self,
        center: &Vec3<T>,
        u: &Vec3<T>,
        v: &Vec3<T>,
        radius: T,
        mut f: F,
    ) {
        let ru = u * radius;
        let rv = v * radius;
        for (c, s) in self.cos.iter().zip(&self.sin) {
            f(center + ru * *c + rv * *s);
        }
    }
}

/// Circle tables with `1..=K` entries, for sampling cones at a fixed arc
/// spacing instead of a fixed count.
#[derive(Debug, Clone)]
pub struct ConeTables<T: Real> {
    tables: Vec<CircleTable<T>>,
}

impl<T: Real> ConeTables<T> {
    pub fn new(k: usize) -> Self {
        ConeTables {
            tables: (1..=k.max(1)).map(CircleTable::new).collect(),
        }
    }

    /// Candidates on a cone of radius `r` (the sine of its half-angle):
    /// `ceil(K r)`, at least one. Neighbors are never more than `2π/K`
    /// apart along the unit sphere.
    pub fn count(&self, radius: T) -> usize {
        let k = self.tables.len();
        let m = (to_f64(radius) * k as f64).ceil();
        if m.is_nan() {
            return 1;
        }
        (m as usize).clamp(1, k)
    }

    pub fn for_radius(&self, radius: T) -> &CircleTable<T> {
        &self.tables[self.count(radius) - 1]
    }
}

/// Geometry shared by all candidates of one pair.
#[derive(Debug, Clone, Copy)]
pub struct PairFrame<T: Real> {
    pub dir: Vec3<T>,
    pub u: Vec3<T>,
    pub v: Vec3<T>,
}

impl<T: Real> PairFrame<T> {
    pub fn new(pair: &PointPair<T>) -> Self {
        let dir = pair.direction();
        let (u, v) = circle_frame(&dir);
        PairFrame { dir, u, v }
    }

    /// Center of the candidate circle, `p1 + mu d̂`.
    pub fn circle_center(&self, pair: &PointPair<T>, mu: T) -> Vec3<T> {
        pair.p1 + self.dir * mu
    }

    /// Offset of the cone axis and cone radius for cosine `alpha`.
    pub fn cone(&self, alpha: T) -> (Vec3<T>, T) {
        let a = alpha.clamp(-T::one(), T::one());
        let r = (T::one() - a * a).max(T::zero()).sqrt();
        (self.dir * a, r)
    }
}

/// `k` candidate centers on the circle of radius `nu` around `p1 + mu d̂`.
pub fn center_candidates<T: Real>(pair: &PointPair<T>, mu: T, nu: T, k: usize) -> Vec<Vec3<T>> {
    let frame = PairFrame::new(pair);
    let c = frame.circle_center(pair, mu);
    let mut out = Vec::with_capacity(k);
    CircleTable::new(k).for_each_on_circle(&c, &frame.u, &frame.v, nu.max(T::zero()), |o| {
        out.push(o)
    });
    out
}

/// `k` unit directions on the cone `ê·d̂ = alpha`.
pub fn orientation_candidates<T: Real>(pair: &PointPair<T>, alpha: T, k: usize) -> Vec<Vec3<T>> {
    let frame = PairFrame::new(pair);
    let (axis, r) = frame.cone(alpha);
    let mut out = Vec::with_capacity(k);
    CircleTable::new(k).for_each_on_circle(&axis, &frame.u, &frame.v, r, |e| out.push(e));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose9D;
    use crate::targets::{center_offsets, compute_targets};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng) -> PointPair<f64> {
        let mut r = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        PointPair::new(0, 1, r(), r(), r().normalize(), r().normalize()).unwrap()
    }

    #[test]
    fn frame_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = random_pair(&mut rng).direction();
            let (u, v) = circle_frame(&d);
            assert!((u.norm() - 1.0).abs() < 1e-12 && (v.norm() - 1.0).abs() < 1e-12);
            assert!(u.dot(&d).abs() < 1e-12 && v.dot(&d).abs() < 1e-12 && u.dot(&v).abs() < 1e-12);
        }
        let (u, v) = circle_frame(&Vec3::<f64>::z());
        assert!(u.dot(&v).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_circle_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_pair(&mut rng);
        let c = p.p1 + p.direction() * 0.3;
        for o in center_candidates(&p, 0.3, 0.0, 72) {
            assert!((o - c).norm() < 1e-15);
        }
    }

    #[test]
    fn center_candidates_reproduce_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = random_pair(&mut rng);
            let mu = rng.random_range(-1.0..1.0);
            let nu = rng.random_range(0.0..1.0);
            let dir = p.direction();
            let c = p.p1 + dir * mu;
            for o in center_candidates(&p, mu, nu, 72) {
                assert!(((o - c).norm() - nu).abs() < 1e-9);
                assert!((o - c).dot(&p.d()).abs() < 1e-9);
                let (mu2, nu2) = center_offsets(&p.p1, &dir, &o);
                assert!((mu2 - mu).abs() < 1e-9 && (nu2 - nu).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn true_center_within_arc_spacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 72;
        for _ in 0..500 {
            let p = random_pair(&mut rng);
            let o = Vec3::new(rng.random(), rng.random(), rng.random());
            let (mu, nu) = center_offsets(&p.p1, &p.direction(), &o);
            let best = center_candidates(&p, mu, nu, k)
                .iter()
                .map(|c| (c - o).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= nu * std::f64::consts::TAU / k as f64 + 1e-12);
            // tighter: half the arc spacing
            assert!(best <= nu * std::f64::consts::PI / k as f64 + 1e-12);
        }
    }

    #[test]
    fn arc_spaced_cones() {
        let tables = ConeTables::<f64>::new(72);
        assert_eq!(tables.count(1.0), 72);
        assert_eq!(tables.count(0.5), 36);
        assert_eq!(tables.count(0.0), 1);
        assert_eq!(tables.count(1e-9), 1);
        assert_eq!(tables.count(0.501), 37);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let r: f64 = rng.random_range(0.0..=1.0);
            let m = tables.for_radius(r).len();
            // chord between neighbors on the unit sphere stays within 2π/K
            assert!(r * std::f64::consts::TAU / m as f64 <= std::f64::consts::TAU / 72.0 + 1e-12);
        }
    }

    #[test]
    fn cone_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_pair(&mut rng);
        let d = p.direction();
        for e in orientation_candidates(&p, 1.0, 36) {
            assert!((e - d).norm() < 1e-15);
        }
        for e in orientation_candidates(&p, 0.0, 36) {
            assert!(e.dot(&d).abs() < 1e-12);
        }
        for _ in 0..500 {
            let p = random_pair(&mut rng);
            let rot = crate::geometry::random_rotation::<f64, _>(&mut rng);
            let pose = Pose9D::from_rotation(&rot, Vec3::zeros(), Vec3::repeat(0.1));
            let s = compute_targets(&p, &pose, &pose.s).unwrap();
            let cands = orientation_candidates(&p, s.alpha, 72);
            let mut best = 180.0f64;
            for e in &cands {
                assert!((e.dot(&p.direction()) - s.alpha).abs() < 1e-9);
                assert!((e.norm() - 1.0).abs() < 1e-9);
                best = best.min(e.angle(&pose.e1).to_degrees());
            }
            assert!(best <= 360.0 / 72.0 + 1e-6);
        }
    }
}
