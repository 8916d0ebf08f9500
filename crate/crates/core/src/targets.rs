//! Ground-truth voting statistics of a pair under a known pose, and the
//! anchor codec that turns scalar statistics into classification bins.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose9D;
use crate::ppf::PointPair;
use crate::scalar::{lit, to_f64, vec3_from_array, vec3_to_array, Real, Vec3};

/// Per-pair voting targets.
///
/// `mu`/`nu` place the center on a circle around the pair axis, `alpha`/`beta`
/// are the cosines between the pair direction and the up/right axes, `gamma`
/// is the log ratio of the instance extents to the category mean, and
/// `sigma`/`tau` tell whether `n1` leans along the up/right axes. `sigma`
/// and `tau` are probabilities in `[0, 1]`; exact targets are 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStatistics<T: Real> {
    pub mu: T,
    pub nu: T,
    pub alpha: T,
    pub beta: T,
    pub gamma: Vec3<T>,
    pub sigma: T,
    pub tau: T,
}

impl<T: Real> PairStatistics<T> {
    /// Forces the invariants (`nu >= 0`, cosines and probabilities in range).
    /// The flag reports whether anything had to move.
    pub fn clamped(self) -> (Self, bool) {
        let unit = |x: T| x.clamp(-T::one(), T::one());
        let prob = |x: T| x.clamp(T::zero(), T::one());
        let out = PairStatistics {
            mu: self.mu,
            nu: self.nu.max(T::zero()),
            alpha: unit(self.alpha),
            beta: unit(self.beta),
            gamma: self.gamma,
            sigma: prob(self.sigma),
            tau: prob(self.tau),
        };
        let moved = out != self;
        (out, moved)
    }
}

/// Exact statistics of `pair` for an object at `pose`.
pub fn compute_targets<T: Real>(
    pair: &PointPair<T>,
    pose: &Pose9D<T>,
    mean_scale: &Vec3<T>,
) -> Result<PairStatistics<T>> {
    if mean_scale.iter().any(|&x| x <= T::zero()) {
        return Err(Error::invalid("mean scale", "must be positive"));
    }
    let d = pair.d();
    let len = d.norm();
    if len <= T::zero() {
        return Err(Error::DegeneratePair);
    }
    let dir = d / len;
    let (mu, nu) = center_offsets(&pair.p1, &dir, &pose.t);
    let gamma = Vec3::from_fn(|a, _| pose.s[a].ln() - mean_scale[a].ln());
    let bit = |c: T| if c > T::zero() { T::one() } else { T::zero() };
    Ok(PairStatistics {
        mu,
        nu,
        alpha: pose.e1.dot(&dir).clamp(-T::one(), T::one()),
        beta: pose.e2.dot(&dir).clamp(-T::one(), T::one()),
        gamma,
        sigma: bit(pair.n1.dot(&pose.e1)),
        tau: bit(pair.n1.dot(&pose.e2)),
    })
}

/// Projection of `center − p1` onto the unit pair direction and the distance
/// from the center to the pair axis.
pub fn center_offsets<T: Real>(p1: &Vec3<T>, dir: &Vec3<T>, center: &Vec3<T>) -> (T, T) {
    let to_center = center - p1;
    let mu = to_center.dot(dir);
    let foot = p1 + dir * mu;
    (mu, (center - foot).norm())
}

/// Uniform bins over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorCodec<T: Real> {
    lo: T,
    hi: T,
    n_bins: usize,
}

impl<T: Real> AnchorCodec<T> {
    pub fn new(lo: T, hi: T, n_bins: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid("anchor codec", "need lo < hi"));
        }
        if n_bins < 2 {
            return Err(Error::invalid("anchor codec", "need at least two bins"));
        }
        Ok(AnchorCodec { lo, hi, n_bins })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_width(&self) -> T {
        (self.hi - self.lo) / lit(self.n_bins as f64)
    }

    /// Bin containing `x` after clamping to `[lo, hi]`.
    pub fn encode(&self, x: T) -> usize {
        self.encode_checked(x).0
    }

    /// Like [`encode`](Self::encode), also reporting whether `x` was clamped.
    pub fn encode_checked(&self, x: T) -> (usize, bool) {
        let clamped = x < self.lo || x > self.hi;
        let x = x.clamp(self.lo, self.hi);
        let raw = ((x - self.lo) / self.bin_width()).floor();
        let bin = raw.to_usize().unwrap_or(0).min(self.n_bins - 1);
        (bin, clamped)
    }

    /// Center of `bin`.
    pub fn decode(&self, bin: usize) -> T {
        let bin = bin.min(self.n_bins - 1);
        self.lo + self.bin_width() * (lit::<T>(bin as f64) + lit(0.5))
    }
}

/// Anchor layout for one category: 32 bins for the center offsets, 36 for
/// the axis cosines. `gamma` stays continuous.
#[derive(Debug, Clone, Copy)]
pub struct CategoryAnchors<T: Real> {
    pub mu: AnchorCodec<T>,
    pub nu: AnchorCodec<T>,
    pub alpha: AnchorCodec<T>,
    pub beta: AnchorCodec<T>,
}

pub const TRANSLATION_BINS: usize = 32;
pub const ROTATION_BINS: usize = 36;

impl<T: Real> CategoryAnchors<T> {
    /// Offsets range over `[-D, D]` and `[0, D]` with `D` the diagonal of the
    /// category mean box.
    pub fn for_mean_scale(mean_scale: &Vec3<T>) -> Result<Self> {
        let diag = mean_scale.norm();
        Ok(CategoryAnchors {
            mu: AnchorCodec::new(-diag, diag, TRANSLATION_BINS)?,
            nu: AnchorCodec::new(T::zero(), diag, TRANSLATION_BINS)?,
            alpha: AnchorCodec::new(-T::one(), T::one(), ROTATION_BINS)?,
            beta: AnchorCodec::new(-T::one(), T::one(), ROTATION_BINS)?,
        })
    }

    /// Snaps the binned statistics to their bin centers, as a classifier
    /// predicting the arg-max anchor would.
    pub fn quantize(&self, s: &PairStatistics<T>) -> PairStatistics<T> {
        PairStatistics {
            mu: self.mu.decode(self.mu.encode(s.mu)),
            nu: self.nu.decode(self.nu.encode(s.nu)),
            alpha: self.alpha.decode(self.alpha.encode(s.alpha)),
            beta: self.beta.decode(self.beta.encode(s.beta)),
            ..*s
        }
    }
}

/// One line of the JSON-lines target/prediction format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRecord {
    pub i: usize,
    pub j: usize,
    pub mu: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: [f64; 3],
    pub sigma: f64,
    pub tau: f64,
}

impl TargetRecord {
    pub fn new<T: Real>(pair: &PointPair<T>, s: &PairStatistics<T>) -> Self {
        TargetRecord {
            i: pair.i,
            j: pair.j,
            mu: to_f64(s.mu),
            nu: to_f64(s.nu),
            alpha: to_f64(s.alpha),
            beta: to_f64(s.beta),
            gamma: vec3_to_array(&s.gamma),
            sigma: to_f64(s.sigma),
            tau: to_f64(s.tau),
        }
    }

    pub fn statistics<T: Real>(&self) -> PairStatistics<T> {
        PairStatistics {
            mu: lit(self.mu),
            nu: lit(self.nu),
            alpha: lit(self.alpha),
            beta: lit(self.beta),
            gamma: vec3_from_array(self.gamma),
            sigma: lit(self.sigma),
            tau: lit(self.tau),
        }
    }
}

/// Writes one JSON record per pair.
pub fn write_targets<T: Real, W: Write>(
    mut out: W,
    pairs: &[PointPair<T>],
    stats: &[PairStatistics<T>],
) -> Result<()> {
    for (p, s) in pairs.iter().zip(stats) {
        serde_json::to_writer(&mut out, &TargetRecord::new(p, s))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses JSON-lines records; errors carry the 1-based line number.
pub fn read_targets<R: BufRead>(input: R) -> Result<Vec<TargetRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TargetRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(t: Vec3<f64>) -> Pose9D<f64> {
        Pose9D::new(t, Vec3::y(), Vec3::x(), Vec3::new(0.1, 0.2, 0.3)).unwrap()
    }

    #[test]
    fn collinear_center() {
        let pair = PointPair::new(0, 1, Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::y()).unwrap();
        let p = pose(Vec3::new(0.3, 0.0, 0.0));
        let s = compute_targets(&pair, &p, &p.s).unwrap();
        assert!((s.mu - 0.3).abs() < 1e-15);
        assert!(s.nu.abs() < 1e-15);
        assert_eq!(s.gamma, Vec3::zeros());
        assert_eq!(s.alpha, 0.0);
        assert_eq!(s.beta, 1.0);
        assert_eq!(s.sigma, 1.0);
        assert_eq!(s.tau, 0.0);
    }

    #[test]
    fn nu_zero_iff_on_line() {
        let pair = PointPair::new(0, 1, Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::y()).unwrap();
        let off = pose(Vec3::new(0.3, 1e-3, 0.0));
        let s = compute_targets(&pair, &off, &off.s).unwrap();
        assert!((s.nu - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn gamma_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = PointPair::new(0, 1, Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::y()).unwrap();
        for _ in 0..1000 {
            let s = Vec3::new(
                rng.random_range(0.01..1.0),
                rng.random_range(0.01..1.0),
                rng.random_range(0.01..1.0),
            );
            let mean = Vec3::new(
                rng.random_range(0.01..1.0),
                rng.random_range(0.01..1.0),
                rng.random_range(0.01..1.0),
            );
            let p = Pose9D::new(Vec3::zeros(), Vec3::y(), Vec3::x(), s).unwrap();
            let st = compute_targets(&pair, &p, &mean).unwrap();
            let back = st.gamma.map(f64::exp).component_mul(&mean);
            for a in 0..3 {
                assert!((back[a] - s[a]).abs() <= 1e-12 * s[a]);
            }
        }
    }

    #[test]
    fn invariant_under_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let rnd = |rng: &mut ChaCha8Rng| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            };
            let p1 = rnd(&mut rng);
            let p2 = rnd(&mut rng);
            let n1 = rnd(&mut rng).normalize();
            let n2 = rnd(&mut rng).normalize();
            let pair = PointPair::new(0, 1, p1, p2, n1, n2).unwrap();
            let rot = crate::geometry::random_rotation::<f64, _>(&mut rng);
            let gt = Pose9D::from_rotation(&rot, rnd(&mut rng), Vec3::new(0.1, 0.2, 0.3));
            let xf = RigidTransform::random(&mut rng, 3.0);
            let moved_pair = PointPair::new(
                0,
                1,
                xf.apply_point(&p1),
                xf.apply_point(&p2),
                xf.apply_vector(&n1),
                xf.apply_vector(&n2),
            )
            .unwrap();
            let a = compute_targets(&pair, &gt, &gt.s).unwrap();
            let b = compute_targets(&moved_pair, &gt.transformed(&xf), &gt.s).unwrap();
            assert!((a.mu - b.mu).abs() < 1e-9);
            assert!((a.nu - b.nu).abs() < 1e-9);
            assert!((a.alpha - b.alpha).abs() < 1e-9);
            assert!((a.beta - b.beta).abs() < 1e-9);
            assert!(a.nu >= 0.0);
        }
    }

    #[test]
    fn codec_arithmetic() {
        let c = AnchorCodec::<f64>::new(-1.0, 1.0, 36).unwrap();
        assert_eq!(c.encode(0.0), 18);
        assert!((c.decode(18) - 1.0 / 36.0).abs() < 1e-15);
        assert_eq!(c.encode(-1.0), 0);
        assert_eq!(c.encode(1.0), 35);
        assert_eq!(c.encode_checked(1.5), (35, true));
        assert_eq!(c.encode_checked(-7.0), (0, true));
        assert!(!c.encode_checked(0.2).1);
        assert!(AnchorCodec::new(1.0, 1.0, 4).is_err());
        assert!(AnchorCodec::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn codec_round_trip_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for bins in [32usize, 36] {
            let c = AnchorCodec::<f64>::new(-0.4, 0.7, bins).unwrap();
            let half = c.bin_width() / 2.0;
            for _ in 0..100_000 {
                let x = rng.random_range(-0.4..=0.7);
                assert!((c.decode(c.encode(x)) - x).abs() <= half + 1e-15);
            }
        }
    }

    #[test]
    fn quantize_snaps_to_bin_centers() {
        let anchors = CategoryAnchors::<f64>::for_mean_scale(&Vec3::new(0.1, 0.2, 0.2)).unwrap();
        let s = PairStatistics {
            mu: 0.05,
            nu: 0.02,
            alpha: 0.3,
            beta: -0.9,
            gamma: Vec3::new(0.1, 0.0, -0.1),
            sigma: 1.0,
            tau: 0.0,
        };
        let q = anchors.quantize(&s);
        assert!((q.mu - s.mu).abs() <= anchors.mu.bin_width() / 2.0);
        assert!((q.alpha - s.alpha).abs() <= anchors.alpha.bin_width() / 2.0);
        assert_eq!(q.gamma, s.gamma);
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let pair = PointPair::new(3, 9, Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::y()).unwrap();
        let p = pose(Vec3::new(0.3, 0.1, 0.0));
        let s = compute_targets(&pair, &p, &Vec3::new(0.1, 0.1, 0.1)).unwrap();
        let mut buf = Vec::new();
        write_targets(&mut buf, &[pair], &[s]).unwrap();
        let recs = read_targets(&buf[..]).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!((recs[0].i, recs[0].j), (3, 9));
        assert_eq!(recs[0].statistics::<f64>(), s);

        let bad = "{\"i\":0,\"j\":1,\"mu\":0.1,\"nu\":0.1,\"alpha\":0,\"beta\":0,\"gamma\":[0,0,0],\"sigma\":1,\"tau\":0}\n{\"i\":0,\"j\":1,\"mu\":0.1,\"alpha\":0,\"beta\":0,\"gamma\":[0,0,0],\"sigma\":1,\"tau\":0}\n";
        let err = read_targets(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("nu"), "{err}");
    }
}
