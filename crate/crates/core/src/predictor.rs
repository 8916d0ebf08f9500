//! The boundary where a learned network would sit: pairs in, statistics out.
//!
//! Oracles compute the statistics from a known pose, optionally corrupted;
//! [`FilePredictor`] replays externally produced predictions.

use std::collections::HashMap;
use std::io::BufReader;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Pose9D;
use crate::ppf::{PointPair, PAIR_CHUNK};
use crate::scalar::{lit, mix64, to_f64, Real, Vec3};
use crate::targets::{compute_targets, read_targets, PairStatistics};

/// Anything that maps pairs to statistics. Implementations must be callable
/// concurrently on disjoint shards and must not depend on shard boundaries.
pub trait Predictor<T: Real>: Send + Sync {
    fn predict(&self, pairs: &[PointPair<T>]) -> Result<Vec<PairStatistics<T>>>;
}

/// Runs `predictor` over `pairs` in parallel shards and applies the
/// interface-level clamp. Returns the statistics and the number of clamped
/// records.
pub fn predict_all<T: Real, P: Predictor<T> + ?Sized>(
    predictor: &P,
    pairs: &[PointPair<T>],
) -> Result<(Vec<PairStatistics<T>>, usize)> {
    let shards: Vec<Vec<PairStatistics<T>>> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|shard| {
            let out = predictor.predict(shard)?;
            if out.len() != shard.len() {
                return Err(Error::PredictorLength {
                    expected: shard.len(),
                    got: out.len(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut clamped = 0;
    let stats = shards
        .into_iter()
        .flatten()
        .map(|s| {
            let (s, moved) = s.clamped();
            clamped += moved as usize;
            s
        })
        .collect();
    Ok((stats, clamped))
}

/// Exact statistics for a single known pose.
#[derive(Debug, Clone)]
pub struct ExactOracle<T: Real> {
    pub pose: Pose9D<T>,
    pub mean_scale: Vec3<T>,
}

pub fn oracle_exact<T: Real>(pose: Pose9D<T>, mean_scale: Vec3<T>) -> ExactOracle<T> {
    ExactOracle { pose, mean_scale }
}

impl<T: Real> Predictor<T> for ExactOracle<T> {
    fn predict(&self, pairs: &[PointPair<T>]) -> Result<Vec<PairStatistics<T>>> {
        pairs
            .iter()
            .map(|p| compute_targets(p, &self.pose, &self.mean_scale))
            .collect()
    }
}

/// Per-field Gaussian noise levels for [`CorruptedOracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSigmas<T: Real> {
    pub mu: T,
    pub nu: T,
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> NoiseSigmas<T> {
    pub fn zero() -> Self {
        NoiseSigmas {
            mu: T::zero(),
            nu: T::zero(),
            alpha: T::zero(),
            beta: T::zero(),
            gamma: T::zero(),
        }
    }
}

/// Half-width of the uniform range outlier `gamma` values are drawn from.
pub const OUTLIER_GAMMA_RANGE: f64 = std::f64::consts::LN_2;

/// Valid ranges of the statistics for a category: `mu ∈ [-D, D]`,
/// `nu ∈ [0, D]` with `D` the mean box diagonal, cosines in `[-1, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct StatRanges<T: Real> {
    pub diag: T,
    pub gamma: T,
}

impl<T: Real> StatRanges<T> {
    pub fn for_mean_scale(mean_scale: &Vec3<T>) -> Self {
        StatRanges {
            diag: mean_scale.norm(),
            gamma: lit(OUTLIER_GAMMA_RANGE),
        }
    }

    /// Statistics drawn uniformly from the valid ranges.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> PairStatistics<T> {
        let d = to_f64(self.diag);
        let g = to_f64(self.gamma);
        let mut u = |lo: f64, hi: f64| -> T { lit(rng.random_range(lo..=hi)) };
        let mu = u(-d, d);
        let nu = u(0.0, d);
        let alpha = u(-1.0, 1.0);
        let beta = u(-1.0, 1.0);
        let gamma = Vec3::new(u(-g, g), u(-g, g), u(-g, g));
        let sigma = if rng.random::<bool>() { T::one() } else { T::zero() };
        let tau = if rng.random::<bool>() { T::one() } else { T::zero() };
        PairStatistics {
            mu,
            nu,
            alpha,
            beta,
            gamma,
            sigma,
            tau,
        }
    }

    fn clamp(&self, s: PairStatistics<T>) -> PairStatistics<T> {
        let (mut s, _) = s.clamped();
        s.mu = s.mu.clamp(-self.diag, self.diag);
        s.nu = s.nu.clamp(T::zero(), self.diag);
        s
    }
}

/// Random stream for one pair, a pure function of `(seed, i, j)` so that the
/// corruption pattern does not depend on how pairs are sharded.
pub fn pair_rng(seed: u64, i: usize, j: usize) -> ChaCha8Rng {
    let key = mix64(mix64(seed) ^ mix64((i as u64) << 1) ^ mix64(((j as u64) << 1) | 1));
    ChaCha8Rng::seed_from_u64(key)
}

/// Exact oracle whose outputs are partly replaced by uniform outliers and
/// otherwise perturbed by Gaussian noise.
#[derive(Debug, Clone)]
pub struct CorruptedOracle<T: Real> {
    pub exact: ExactOracle<T>,
    pub outlier_fraction: f64,
    pub noise: NoiseSigmas<T>,
    pub ranges: StatRanges<T>,
    pub seed: u64,
}

pub fn oracle_corrupted<T: Real>(
    pose: Pose9D<T>,
    mean_scale: Vec3<T>,
    outlier_fraction: f64,
    noise: NoiseSigmas<T>,
    seed: u64,
) -> Result<CorruptedOracle<T>> {
    if !(0.0..=1.0).contains(&outlier_fraction) {
        return Err(Error::invalid("outlier fraction", "must lie in [0, 1]"));
    }
    Ok(CorruptedOracle {
        exact: oracle_exact(pose, mean_scale),
        outlier_fraction,
        noise,
        ranges: StatRanges::for_mean_scale(&mean_scale),
        seed,
    })
}

impl<T: Real> CorruptedOracle<T> {
    /// Whether the pair `(i, j)` receives an outlier.
    pub fn is_outlier(&self, i: usize, j: usize) -> bool {
        pair_rng(self.seed, i, j).random::<f64>() < self.outlier_fraction
    }

    fn corrupt(&self, pair: &PointPair<T>, exact: PairStatistics<T>) -> PairStatistics<T> {
        let mut rng = pair_rng(self.seed, pair.i, pair.j);
        if rng.random::<f64>() < self.outlier_fraction {
            return self.ranges.sample_uniform(&mut rng);
        }
        let mut noisy = |x: T, sigma: T| -> T {
            if sigma <= T::zero() {
                return x;
            }
            let n = Normal::new(0.0, to_f64(sigma)).expect("finite sigma");
            x + lit(n.sample(&mut rng))
        };
        let s = PairStatistics {
            mu: noisy(exact.mu, self.noise.mu),
            nu: noisy(exact.nu, self.noise.nu),
            alpha: noisy(exact.alpha, self.noise.alpha),
            beta: noisy(exact.beta, self.noise.beta),
            gamma: exact.gamma.map(|g| noisy(g, self.noise.gamma)),
            sigma: exact.sigma,
            tau: exact.tau,
        };
        self.ranges.clamp(s)
    }
}

impl<T: Real> Predictor<T> for CorruptedOracle<T> {
    fn predict(&self, pairs: &[PointPair<T>]) -> Result<Vec<PairStatistics<T>>> {
        let exact = self.exact.predict(pairs)?;
        Ok(pairs
            .iter()
            .zip(exact)
            .map(|(p, s)| self.corrupt(p, s))
            .collect())
    }
}

/// Oracle for multi-object scenes with per-point object labels.
///
/// Pairs whose endpoints lie on the same object get exact statistics for
/// that object. Pairs touching background (label `-1`) or spanning two
/// objects have no meaningful target and receive uniform random statistics,
/// seeded per pair.
#[derive(Debug, Clone)]
pub struct SceneOracle<T: Real> {
    pub poses: Vec<Pose9D<T>>,
    pub labels: Vec<i32>,
    pub mean_scale: Vec3<T>,
    pub ranges: StatRanges<T>,
    pub seed: u64,
}

pub fn oracle_scene<T: Real>(
    poses: Vec<Pose9D<T>>,
    labels: Vec<i32>,
    mean_scale: Vec3<T>,
    seed: u64,
) -> SceneOracle<T> {
    SceneOracle {
        poses,
        labels,
        ranges: StatRanges::for_mean_scale(&mean_scale),
        mean_scale,
        seed,
    }
}

impl<T: Real> Predictor<T> for SceneOracle<T> {
    fn predict(&self, pairs: &[PointPair<T>]) -> Result<Vec<PairStatistics<T>>> {
        pairs
            .iter()
            .map(|p| {
                let li = *self.labels.get(p.i).ok_or(Error::PredictionMissing(p.i, p.j))?;
                let lj = *self.labels.get(p.j).ok_or(Error::PredictionMissing(p.i, p.j))?;
                if li >= 0 && li == lj {
                    compute_targets(p, &self.poses[li as usize], &self.mean_scale)
                } else {
                    Ok(self.ranges.sample_uniform(&mut pair_rng(self.seed, p.i, p.j)))
                }
            })
            .collect()
    }
}

/// Predictions loaded from a JSON-lines file keyed by `(i, j)`.
#[derive(Debug)]
pub struct FilePredictor<T: Real> {
    table: HashMap<(usize, usize), PairStatistics<T>>,
    clamp_warnings: AtomicUsize,
}

pub fn from_file<T: Real>(path: impl AsRef<Path>) -> Result<FilePredictor<T>> {
    let file = std::fs::File::open(path.as_ref())?;
    FilePredictor::from_reader(BufReader::new(file))
}

impl<T: Real> FilePredictor<T> {
    pub fn from_reader<R: std::io::BufRead>(input: R) -> Result<Self> {
        let records = read_targets(input)?;
        let mut warnings = 0;
        let mut table = HashMap::with_capacity(records.len());
        for rec in records {
            let (stats, moved) = rec.statistics::<T>().clamped();
            if moved {
                warnings += 1;
                log::warn!(
                    "prediction for pair ({}, {}) out of range, clamped",
                    rec.i,
                    rec.j
                );
            }
            table.insert((rec.i, rec.j), stats);
        }
        Ok(FilePredictor {
            table,
            clamp_warnings: AtomicUsize::new(warnings),
        })
    }

    /// Number of records that had to be clamped into range.
    pub fn clamp_warnings(&self) -> usize {
        self.clamp_warnings.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl<T: Real> Predictor<T> for FilePredictor<T> {
    fn predict(&self, pairs: &[PointPair<T>]) -> Result<Vec<PairStatistics<T>>> {
        pairs
            .iter()
            .map(|p| {
                self.table
                    .get(&(p.i, p.j))
                    .copied()
                    .ok_or(Error::PredictionMissing(p.i, p.j))
            })
            .collect()
    }
}

impl<T: Real, P: Predictor<T> + ?Sized> Predictor<T> for Box<P> {
    fn predict(&self, pairs: &[PointPair<T>]) -> Result<Vec<PairStatistics<T>>> {
        (**self).predict(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use crate::ppf::sample_pairs;
    use crate::targets::write_targets;

    fn setup() -> (Vec<PointPair<f64>>, Pose9D<f64>, Vec3<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<Vec3<f64>> = (0..500)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 0.2)
            .collect();
        let normals: Vec<Vec3<f64>> = (0..500)
            .map(|_| Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 1.0))
            .collect();
        let cloud = PointCloud::new(pts, normals, Vec3::zeros()).unwrap();
        let pairs = sample_pairs(&cloud, 10_000, 3).unwrap();
        let rot = crate::geometry::random_rotation::<f64, _>(&mut rng);
        let pose = Pose9D::from_rotation(&rot, Vec3::new(0.1, 0.1, 0.1), Vec3::new(0.2, 0.1, 0.15));
        (pairs, pose, Vec3::new(0.15, 0.15, 0.15))
    }

    #[test]
    fn exact_oracle_is_compute_targets() {
        let (pairs, pose, mean) = setup();
        let out = oracle_exact(pose, mean).predict(&pairs).unwrap();
        for (p, s) in pairs.iter().zip(&out) {
            assert_eq!(*s, compute_targets(p, &pose, &mean).unwrap());
            assert!(s.sigma == 0.0 || s.sigma == 1.0);
        }
    }

    #[test]
    fn zero_corruption_is_exact() {
        let (pairs, pose, mean) = setup();
        let exact = oracle_exact(pose, mean).predict(&pairs).unwrap();
        let c = oracle_corrupted(pose, mean, 0.0, NoiseSigmas::zero(), 9).unwrap();
        assert_eq!(c.predict(&pairs).unwrap(), exact);
        assert!(oracle_corrupted(pose, mean, 1.5, NoiseSigmas::zero(), 9).is_err());
    }

    #[test]
    fn corruption_is_seeded_and_shard_independent() {
        let (pairs, pose, mean) = setup();
        let noise = NoiseSigmas {
            mu: 0.005,
            nu: 0.005,
            alpha: 0.05,
            beta: 0.05,
            gamma: 0.0,
        };
        let c = oracle_corrupted(pose, mean, 0.3, noise, 77).unwrap();
        let whole = c.predict(&pairs).unwrap();
        let mut sharded = c.predict(&pairs[..1234]).unwrap();
        sharded.extend(c.predict(&pairs[1234..]).unwrap());
        assert_eq!(whole, sharded);
        let other = oracle_corrupted(pose, mean, 0.3, noise, 78).unwrap();
        assert_ne!(whole, other.predict(&pairs).unwrap());
        for s in &whole {
            assert!(s.nu >= 0.0 && s.alpha.abs() <= 1.0 && s.beta.abs() <= 1.0);
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn full_corruption_is_uncorrelated() {
        let (pairs, pose, mean) = setup();
        let exact = oracle_exact(pose, mean).predict(&pairs).unwrap();
        let c = oracle_corrupted(pose, mean, 1.0, NoiseSigmas::zero(), 5).unwrap();
        let out = c.predict(&pairs).unwrap();
        let fields: [fn(&PairStatistics<f64>) -> f64; 4] =
            [|s| s.mu, |s| s.nu, |s| s.alpha, |s| s.beta];
        // |r| of independent samples: sd 1/sqrt(1e4) = 0.01
        for f in fields {
            let a: Vec<f64> = exact.iter().map(f).collect();
            let b: Vec<f64> = out.iter().map(f).collect();
            assert!(correlation(&a, &b).abs() < 0.04);
        }
    }

    #[test]
    fn file_round_trip_missing_and_clamp() {
        let (pairs, pose, mean) = setup();
        let exact = oracle_exact(pose, mean).predict(&pairs).unwrap();
        let mut buf = Vec::new();
        write_targets(&mut buf, &pairs, &exact).unwrap();
        let file = FilePredictor::<f64>::from_reader(&buf[..]).unwrap();
        assert_eq!(file.predict(&pairs).unwrap(), exact);
        assert_eq!(file.clamp_warnings(), 0);

        let mut missing = pairs[0];
        missing.i = 100_000;
        let err = file.predict(&[missing]).unwrap_err();
        assert!(err.to_string().contains("prediction missing"));

        let line = "{\"i\":0,\"j\":1,\"mu\":0.1,\"nu\":0.1,\"alpha\":1.5,\"beta\":0,\"gamma\":[0,0,0],\"sigma\":0.7,\"tau\":0}\n";
        let f = FilePredictor::<f64>::from_reader(line.as_bytes()).unwrap();
        assert_eq!(f.clamp_warnings(), 1);
        let mut pair = pairs[0];
        pair.i = 0;
        pair.j = 1;
        let s = f.predict(&[pair]).unwrap()[0];
        assert_eq!(s.alpha, 1.0);
        assert_eq!(s.sigma, 0.7);
    }

    #[test]
    fn predict_all_matches_sequential() {
        let (pairs, pose, mean) = setup();
        let o = oracle_exact(pose, mean);
        let (par, clamped) = predict_all(&o, &pairs).unwrap();
        assert_eq!(par, o.predict(&pairs).unwrap());
        assert_eq!(clamped, 0);
    }
}
