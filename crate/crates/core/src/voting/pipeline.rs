use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::candidates::{circle_frame, CircleTable, ConeTables, PairFrame};
use super::grid::VoteGrid;
use super::sphere::{OrientationHistogram, SphereLattice};
use super::VotingConfig;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose9D};
use crate::ppf::{sample_pairs, PointPair, PAIR_CHUNK};
use crate::predictor::{predict_all, Predictor};
use crate::scalar::{lit, to_f64, Real, Vec3};
use crate::targets::PairStatistics;

/// Clamp applied to the probability mapping in the flip test.
const FLIP_PROB_CLAMP: f64 = 1e-4;

/// Pairs that survived back-tracing and how many near-center candidates
/// each point contributed to.
#[derive(Debug, Clone, PartialEq)]
pub struct Backtrace {
    /// Indices into the pair list, ascending.
    pub pool: Vec<usize>,
    /// Per point of the cloud.
    pub point_votes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationVotes<T: Real> {
    pub e1: Vec3<T>,
    pub e2: Vec3<T>,
    pub hist1: OrientationHistogram<T>,
    pub hist2: OrientationHistogram<T>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub sampling: Duration,
    pub prediction: Duration,
    pub center: Duration,
    pub backtrace: Duration,
    pub orientation: Duration,
    pub scale: Duration,
}

#[derive(Debug, Clone)]
pub struct PoseEstimate<T: Real> {
    pub pose: Pose9D<T>,
    /// Count of the winning center voxel.
    pub center_votes: u32,
    pub pool_size: usize,
    /// Predictions the interface clamp had to move.
    pub clamped_predictions: usize,
    pub grid: VoteGrid<T>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T: Real> {
    pub pose: Pose9D<T>,
    pub center_votes: u32,
    pub inlier_point_indices: Vec<usize>,
}

/// Voting engine for one configuration. Holds the orientation lattice and
/// the circle table so repeated estimates do not rebuild them.
#[derive(Debug, Clone)]
pub struct Voter<T: Real> {
    config: VotingConfig<T>,
    lattice: Arc<SphereLattice<T>>,
    table: CircleTable<T>,
    cones: ConeTables<T>,
}

impl<T: Real> Voter<T> {
    pub fn new(config: VotingConfig<T>) -> Result<Self> {
        config.validate()?;
        let lattice = Arc::new(SphereLattice::with_resolution(config.orientation_resolution)?);
        Ok(Self::with_lattice(config, lattice))
    }

    /// Shares an existing lattice; its resolution takes precedence.
    pub fn with_lattice(config: VotingConfig<T>, lattice: Arc<SphereLattice<T>>) -> Self {
        let table = CircleTable::new(config.k_circle);
        let cones = ConeTables::new(config.k_circle);
        Voter {
            config,
            lattice,
            table,
            cones,
        }
    }

    pub fn config(&self) -> &VotingConfig<T> {
        &self.config
    }

    pub fn lattice(&self) -> &Arc<SphereLattice<T>> {
        &self.lattice
    }

    /// Empty grid over the cloud's bounding box plus one voxel of margin.
    pub fn grid_for(&self, cloud: &PointCloud<T>) -> Result<VoteGrid<T>> {
        let (lo, hi) = cloud.bounds().ok_or(Error::NoValidVotes)?;
        VoteGrid::covering(&lo, &hi, self.config.grid_resolution)
    }

    /// Accumulates every pair's circle candidates into a copy of `template`.
    /// Integer counts are merged by addition, so the result does not depend
    /// on the number of workers.
    pub fn accumulate_centers(
        &self,
        template: &VoteGrid<T>,
        pairs: &[PointPair<T>],
        stats: &[PairStatistics<T>],
    ) -> VoteGrid<T> {
        let n = template.len();
        let inv = T::one() / template.resolution;
        let counts = pairs
            .par_chunks(PAIR_CHUNK)
            .zip(stats.par_chunks(PAIR_CHUNK))
            .fold(
                || vec![0u32; n],
                |mut acc, (ps, ss)| {
                    for (p, s) in ps.iter().zip(ss) {
                        let frame = PairFrame::new(p);
                        let c = frame.circle_center(p, s.mu);
                        self.table.for_each_on_circle(&c, &frame.u, &frame.v, s.nu, |o| {
                            if let Some(i) = template.index_of_with(&o, inv) {
                                acc[i] += 1;
                            }
                        });
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u32; n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += *y;
                    }
                    a
                },
            );
        VoteGrid {
            counts,
            ..template.zeroed_like()
        }
    }

    /// Votes the object center: the middle of the highest voxel.
    pub fn vote_center(
        &self,
        cloud: &PointCloud<T>,
        pairs: &[PointPair<T>],
        stats: &[PairStatistics<T>],
    ) -> Result<(Vec3<T>, VoteGrid<T>)> {
        check_lengths(pairs, stats)?;
        let grid = self.accumulate_centers(&self.grid_for(cloud)?, pairs, stats);
        let (best, _) = grid.argmax().ok_or(Error::NoValidVotes)?;
        Ok((grid.cell_center(best), grid))
    }

    /// Keeps the pairs with at least one candidate strictly within `epsilon`
    /// of `center`, and counts near-center candidates per point.
    pub fn backtrace_filter(
        &self,
        n_points: usize,
        pairs: &[PointPair<T>],
        stats: &[PairStatistics<T>],
        center: &Vec3<T>,
        epsilon: T,
    ) -> Result<Backtrace> {
        check_lengths(pairs, stats)?;
        let eps2 = epsilon * epsilon;
        let parts: Vec<(Vec<usize>, Vec<(usize, u32)>)> = pairs
            .par_chunks(PAIR_CHUNK)
            .zip(stats.par_chunks(PAIR_CHUNK))
            .enumerate()
            .map(|(chunk, (ps, ss))| {
                let mut pool = Vec::new();
                let mut hits = Vec::new();
                for (k, (p, s)) in ps.iter().zip(ss).enumerate() {
                    let near = self.near_candidates(p, s, center, epsilon, eps2);
                    if near > 0 {
                        pool.push(chunk * PAIR_CHUNK + k);
                        hits.push((p.i, near));
                        hits.push((p.j, near));
                    }
                }
                (pool, hits)
            })
            .collect();
        let mut pool = Vec::new();
        let mut point_votes = vec![0u32; n_points];
        for (part, hits) in parts {
            pool.extend(part);
            for (i, c) in hits {
                if let Some(v) = point_votes.get_mut(i) {
                    *v += c;
                }
            }
        }
        if pool.is_empty() {
            return Err(Error::NoInlierPairs);
        }
        Ok(Backtrace { pool, point_votes })
    }

    fn near_candidates(
        &self,
        p: &PointPair<T>,
        s: &PairStatistics<T>,
        center: &Vec3<T>,
        epsilon: T,
        eps2: T,
    ) -> u32 {
        let frame = PairFrame::new(p);
        let c = frame.circle_center(p, s.mu);
        // closest approach of the whole circle to the center
        let rel = center - c;
        let h = rel.dot(&frame.dir);
        let radial = (rel - frame.dir * h).norm();
        let gap = radial - s.nu;
        if h * h + gap * gap >= eps2 {
            return 0;
        }
        let _ = epsilon;
        let mut near = 0;
        self.table.for_each_on_circle(&c, &frame.u, &frame.v, s.nu, |o| {
            if (o - center).norm_squared() < eps2 {
                near += 1;
            }
        });
        near
    }

    /// Votes the up (`alpha`) and right (`beta`) axes with the pooled pairs.
    /// Returned axes are the raw histogram peaks.
    pub fn vote_orientation(
        &self,
        pairs: &[PointPair<T>],
        stats: &[PairStatistics<T>],
        pool: &[usize],
    ) -> Result<OrientationVotes<T>> {
        check_lengths(pairs, stats)?;
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        let n = self.lattice.len();
        let (c1, c2) = pool
            .par_chunks(PAIR_CHUNK)
            .fold(
                || (vec![0u32; n], vec![0u32; n]),
                |(mut h1, mut h2), idx| {
                    for &k in idx {
                        let (p, s) = (&pairs[k], &stats[k]);
                        let frame = PairFrame::new(p);
                        let (axis1, r1) = frame.cone(s.alpha);
                        self.cone_table(r1).for_each_on_circle(&axis1, &frame.u, &frame.v, r1, |e| {
                            h1[self.lattice.nearest(&e)] += 1;
                        });
                        let (axis2, r2) = frame.cone(s.beta);
                        self.cone_table(r2).for_each_on_circle(&axis2, &frame.u, &frame.v, r2, |e| {
                            h2[self.lattice.nearest(&e)] += 1;
                        });
                    }
                    (h1, h2)
                },
            )
            .reduce(
                || (vec![0u32; n], vec![0u32; n]),
                |(mut a1, mut a2), (b1, b2)| {
                    a1.iter_mut().zip(&b1).for_each(|(x, y)| *x += *y);
                    a2.iter_mut().zip(&b2).for_each(|(x, y)| *x += *y);
                    (a1, a2)
                },
            );
        let hist1 = OrientationHistogram {
            lattice: self.lattice.clone(),
            counts: c1,
        };
        let hist2 = OrientationHistogram {
            lattice: self.lattice.clone(),
            counts: c2,
        };
        let smooth = self.config.cap_smoothing;
        let (_, e1) = hist1.argmax(smooth).ok_or(Error::EmptyPool)?;
        let (_, e2) = hist2.argmax(smooth).ok_or(Error::EmptyPool)?;
        Ok(OrientationVotes {
            e1,
            e2,
            hist1,
            hist2,
        })
    }

    fn cone_table(&self, radius: T) -> &CircleTable<T> {
        if self.config.uniform_arc {
            self.cones.for_radius(radius)
        } else {
            &self.table
        }
    }

    /// `exp(mean gamma) * mean_scale` over the pool. Partial sums are taken
    /// per fixed-size chunk and added in chunk order.
    pub fn vote_scale(
        &self,
        stats: &[PairStatistics<T>],
        pool: &[usize],
        mean_scale: &Vec3<T>,
    ) -> Result<Vec3<T>> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        let partial: Vec<Vec3<T>> = pool
            .par_chunks(PAIR_CHUNK)
            .map(|idx| {
                idx.iter()
                    .fold(Vec3::zeros(), |acc: Vec3<T>, &k| acc + stats[k].gamma)
            })
            .collect();
        let sum = partial.iter().fold(Vec3::zeros(), |acc: Vec3<T>, p| acc + p);
        let mean = sum / lit::<T>(pool.len() as f64);
        Ok(mean.map(|g| g.exp()).component_mul(mean_scale))
    }

    /// Full coarse-to-fine estimate: sample pairs, predict, vote the center,
    /// back-trace, vote both axes, resolve flips, orthogonalize, vote scale.
    pub fn estimate<P: Predictor<T> + ?Sized>(
        &self,
        cloud: &PointCloud<T>,
        predictor: &P,
        mean_scale: &Vec3<T>,
    ) -> Result<PoseEstimate<T>> {
        let mut timings = StageTimings::default();
        let clock = Instant::now();
        let pairs = sample_pairs(cloud, self.config.n_pairs, self.config.seed)?;
        timings.sampling = clock.elapsed();
        let clock = Instant::now();
        let (stats, clamped) = predict_all(predictor, &pairs)?;
        timings.prediction = clock.elapsed();
        let mut est = self.estimate_from_statistics(cloud, &pairs, &stats, mean_scale)?;
        est.clamped_predictions = clamped;
        est.timings.sampling = timings.sampling;
        est.timings.prediction = timings.prediction;
        Ok(est)
    }

    /// [`estimate`](Self::estimate) on already predicted statistics.
    pub fn estimate_from_statistics(
        &self,
        cloud: &PointCloud<T>,
        pairs: &[PointPair<T>],
        stats: &[PairStatistics<T>],
        mean_scale: &Vec3<T>,
    ) -> Result<PoseEstimate<T>> {
        let mut timings = StageTimings::default();
        let clock = Instant::now();
        let (center, grid) = self.vote_center(cloud, pairs, stats)?;
        let center_votes = grid.argmax().map(|(_, c)| c).unwrap_or(0);
        timings.center = clock.elapsed();

        let clock = Instant::now();
        let pool: Vec<usize> = if self.config.coarse_to_fine {
            self.backtrace_filter(cloud.len(), pairs, stats, &center, self.config.epsilon)?
                .pool
        } else {
            (0..pairs.len()).collect()
        };
        timings.backtrace = clock.elapsed();

        let (pose, orientation, scale) = self.refine(pairs, stats, &pool, center, mean_scale)?;
        timings.orientation = orientation;
        timings.scale = scale;
        Ok(PoseEstimate {
            pose,
            center_votes,
            pool_size: pool.len(),
            clamped_predictions: 0,
            grid,
            timings,
        })
    }

    /// Orientation and scale voting for a fixed center and pool.
    fn refine(
        &self,
        pairs: &[PointPair<T>],
        stats: &[PairStatistics<T>],
        pool: &[usize],
        center: Vec3<T>,
        mean_scale: &Vec3<T>,
    ) -> Result<(Pose9D<T>, Duration, Duration)> {
        let clock = Instant::now();
        let votes = self.vote_orientation(pairs, stats, pool)?;
        let (mut e1, mut e2) = (votes.e1, votes.e2);
        if self.config.disambiguate {
            e1 = disambiguate(pool.iter().map(|&k| (pairs[k].n1, stats[k].sigma)), &e1);
            e2 = disambiguate(pool.iter().map(|&k| (pairs[k].n1, stats[k].tau)), &e2);
        }
        let e2 = orthogonalize(&e1, &e2);
        let orientation = clock.elapsed();
        let clock = Instant::now();
        let s = self.vote_scale(stats, pool, mean_scale)?;
        let scale = clock.elapsed();
        let pose = Pose9D {
            t: center,
            e1: e1.normalize(),
            e2,
            s,
        };
        Ok((pose, orientation, scale))
    }

    /// Every sufficiently voted center in the cloud, each refined with its
    /// own back-traced pool. Points are assigned to the detection they sent
    /// the most near-center votes to, if that count reaches
    /// `min_point_votes`.
    pub fn detect_multi<P: Predictor<T> + ?Sized>(
        &self,
        cloud: &PointCloud<T>,
        predictor: &P,
        mean_scale: &Vec3<T>,
        vote_threshold: u32,
        min_point_votes: u32,
    ) -> Result<Vec<Detection<T>>> {
        if vote_threshold == 0 {
            return Err(Error::invalid("vote threshold", "must be positive"));
        }
        let pairs = sample_pairs(cloud, self.config.n_pairs, self.config.seed)?;
        let (stats, _) = predict_all(predictor, &pairs)?;
        let grid = self.accumulate_centers(&self.grid_for(cloud)?, &pairs, &stats);

        let suppress = self.config.epsilon * lit(2.0);
        let mut centers: Vec<(Vec3<T>, u32)> = Vec::new();
        for (flat, count) in grid.local_maxima(vote_threshold) {
            let c = grid.cell_center(flat);
            if centers.iter().all(|(o, _)| (o - c).norm() > suppress) {
                centers.push((c, count));
            }
        }

        let mut found: Vec<(Pose9D<T>, u32, Vec<u32>)> = Vec::new();
        for (center, count) in centers {
            let bt = match self.backtrace_filter(
                cloud.len(),
                &pairs,
                &stats,
                &center,
                self.config.epsilon,
            ) {
                Ok(bt) => bt,
                Err(Error::NoInlierPairs) => continue,
                Err(e) => return Err(e),
            };
            let (pose, _, _) = self.refine(&pairs, &stats, &bt.pool, center, mean_scale)?;
            found.push((pose, count, bt.point_votes));
        }

        let mut inliers: Vec<Vec<usize>> = vec![Vec::new(); found.len()];
        for point in 0..cloud.len() {
            let mut best: Option<(usize, u32)> = None;
            for (d, (_, _, votes)) in found.iter().enumerate() {
                let v = votes[point];
                if v >= min_point_votes && v > 0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((d, v));
                }
            }
            if let Some((d, _)) = best {
                inliers[d].push(point);
            }
        }
        Ok(found
            .into_iter()
            .zip(inliers)
            .map(|((pose, center_votes, _), inlier_point_indices)| Detection {
                pose,
                center_votes,
                inlier_point_indices,
            })
            .collect())
    }
}

fn check_lengths<T: Real>(pairs: &[PointPair<T>], stats: &[PairStatistics<T>]) -> Result<()> {
    if pairs.len() != stats.len() {
        return Err(Error::PredictorLength {
            expected: pairs.len(),
            got: stats.len(),
        });
    }
    Ok(())
}

/// Summed cross-entropies of keeping and of flipping `e`.
///
/// Each pair contributes `q = clamp((n1·e + 1)/2, δ, 1 − δ)` compared with
/// its predicted flip probability; keeping scores `CE(q, p)`, flipping
/// scores `CE(1 − q, p)`.
pub fn disambiguation_scores<T: Real, I>(items: I, e: &Vec3<T>) -> (f64, f64)
where
    I: IntoIterator<Item = (Vec3<T>, T)>,
{
    let mut keep = 0.0;
    let mut flip = 0.0;
    for (n1, p) in items {
        let q = ((to_f64(n1.dot(e)) + 1.0) / 2.0).clamp(FLIP_PROB_CLAMP, 1.0 - FLIP_PROB_CLAMP);
        let p = to_f64(p);
        let (lq, lnq) = (q.ln(), (1.0 - q).ln());
        keep -= p * lq + (1.0 - p) * lnq;
        flip -= p * lnq + (1.0 - p) * lq;
    }
    (keep, flip)
}

/// Returns `e` or `-e`, whichever agrees better with the predicted flip
/// probabilities. Ties keep `e`.
pub fn disambiguate<T: Real, I>(items: I, e: &Vec3<T>) -> Vec3<T>
where
    I: IntoIterator<Item = (Vec3<T>, T)>,
{
    let (keep, flip) = disambiguation_scores(items, e);
    if keep <= flip {
        *e
    } else {
        -e
    }
}

/// `e2` with its `e1` component removed, renormalized. Falls back to an
/// arbitrary perpendicular when the two are parallel.
pub fn orthogonalize<T: Real>(e1: &Vec3<T>, e2: &Vec3<T>) -> Vec3<T> {
    let e1 = e1.normalize();
    let rest = e2 - e1 * e2.dot(&e1);
    rest.try_normalize(lit(1e-9))
        .unwrap_or_else(|| circle_frame(&e1).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;
    use crate::predictor::oracle_exact;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob_cloud(seed: u64, n: usize, center: Vec3<f64>) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                center
                    + Vec3::new(
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                    )
            })
            .collect();
        let normals = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        PointCloud::new(pts, normals, Vec3::zeros()).unwrap()
    }

    fn small_voter() -> Voter<f64> {
        Voter::new(VotingConfig {
            orientation_resolution: 3.0,
            n_pairs: 20_000,
            ..VotingConfig::with_grid_resolution(0.004)
        })
        .unwrap()
    }

    #[test]
    fn single_pair_zero_radius_hits_circle_center() {
        let voter = small_voter();
        let cloud = blob_cloud(1, 10, Vec3::zeros());
        let pair = PointPair::from_cloud(&cloud, 0, 1).unwrap();
        let stats = PairStatistics {
            mu: 0.01,
            nu: 0.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: Vec3::zeros(),
            sigma: 1.0,
            tau: 1.0,
        };
        let (t, grid) = voter.vote_center(&cloud, &[pair], &[stats]).unwrap();
        let c = pair.p1 + pair.direction() * 0.01;
        assert_eq!(grid.index_of(&c), grid.index_of(&t));
        assert_eq!(grid.total(), 72);
    }

    #[test]
    fn out_of_bounds_votes_error() {
        let voter = small_voter();
        let cloud = blob_cloud(1, 10, Vec3::zeros());
        let pair = PointPair::from_cloud(&cloud, 0, 1).unwrap();
        let stats = PairStatistics {
            mu: 10.0,
            nu: 0.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: Vec3::zeros(),
            sigma: 1.0,
            tau: 1.0,
        };
        let err = voter.vote_center(&cloud, &[pair], &[stats]).unwrap_err();
        assert!(err.to_string().contains("no valid votes"));
    }

    #[test]
    fn shared_direction_alpha_one() {
        let voter = small_voter();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Vec3::new(0.3, -0.2, 0.9).normalize();
        let pairs: Vec<_> = (0..50)
            .map(|i| {
                let p1 = Vec3::new(rng.random(), rng.random(), rng.random());
                PointPair::new(i, i + 1, p1, p1 + d * 0.1, Vec3::z(), Vec3::z()).unwrap()
            })
            .collect();
        let stats = vec![
            PairStatistics {
                mu: 0.0,
                nu: 0.0,
                alpha: 1.0,
                beta: 1.0,
                gamma: Vec3::zeros(),
                sigma: 1.0,
                tau: 1.0,
            };
            50
        ];
        let pool: Vec<usize> = (0..50).collect();
        let v = voter.vote_orientation(&pairs, &stats, &pool).unwrap();
        let expected = voter.lattice().nearest_exhaustive(&d);
        assert_eq!(v.e1, voter.lattice().directions()[expected]);
        assert!(voter.vote_orientation(&pairs, &stats, &[]).is_err());
    }

    #[test]
    fn infinite_epsilon_keeps_everything() {
        let voter = small_voter();
        let cloud = blob_cloud(2, 500, Vec3::new(0.0, 0.0, 0.5));
        let pairs = sample_pairs(&cloud, 2000, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pose = Pose9D::from_rotation(
            &random_rotation(&mut rng),
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::repeat(0.1),
        );
        let stats = oracle_exact(pose, pose.s).predict(&pairs).unwrap();
        let bt = voter
            .backtrace_filter(cloud.len(), &pairs, &stats, &pose.t, f64::INFINITY)
            .unwrap();
        assert_eq!(bt.pool, (0..pairs.len()).collect::<Vec<_>>());
        let far = Vec3::new(5.0, 5.0, 5.0);
        assert!(matches!(
            voter.backtrace_filter(cloud.len(), &pairs, &stats, &far, 0.001),
            Err(Error::NoInlierPairs)
        ));
    }

    #[test]
    fn exact_pairs_all_back_trace() {
        let voter = small_voter();
        let cloud = blob_cloud(5, 800, Vec3::new(0.1, 0.0, 0.6));
        let pairs = sample_pairs(&cloud, 5000, 2).unwrap();
        let pose = Pose9D::new(
            Vec3::new(0.1, 0.0, 0.6),
            Vec3::y(),
            Vec3::x(),
            Vec3::repeat(0.1),
        )
        .unwrap();
        let stats = oracle_exact(pose, pose.s).predict(&pairs).unwrap();
        // nearest candidate is within nu·π/K of the true center
        let max_nu = stats.iter().map(|s| s.nu).fold(0.0, f64::max);
        let eps = max_nu * std::f64::consts::PI / 72.0 + 1e-9;
        let bt = voter
            .backtrace_filter(cloud.len(), &pairs, &stats, &pose.t, eps)
            .unwrap();
        assert_eq!(bt.pool.len(), pairs.len());
        let total: u64 = bt.point_votes.iter().map(|&v| v as u64).sum();
        assert!(total >= 2 * pairs.len() as u64);
    }

    #[test]
    fn flip_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = Vec3::new(0.0, 1.0, 0.0);
        let items: Vec<(Vec3<f64>, f64)> = (0..200)
            .map(|_| {
                let n = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                (n, if n.dot(&e) > 0.0 { 1.0 } else { 0.0 })
            })
            .collect();
        assert_eq!(disambiguate(items.iter().copied(), &e), e);
        assert_eq!(disambiguate(items.iter().copied(), &-e), e);
        let undecided: Vec<_> = items.iter().map(|(n, _)| (*n, 0.5)).collect();
        assert_eq!(disambiguate(undecided.iter().copied(), &-e), -e);
        let (k, f) = disambiguation_scores(undecided.iter().copied(), &e);
        assert_eq!(k, f);
    }

    #[test]
    fn orthogonalize_cases() {
        let e1 = Vec3::<f64>::new(0.0, 1.0, 0.0);
        let e2 = Vec3::new(1.0, 0.1, 0.0);
        let o = orthogonalize(&e1, &e2);
        assert!(o.dot(&e1).abs() < 1e-12 && (o.norm() - 1.0).abs() < 1e-12);
        let p = orthogonalize(&e1, &e1);
        assert!(p.dot(&e1).abs() < 1e-12 && (p.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_from_constant_gamma() {
        let voter = small_voter();
        let zero = PairStatistics {
            mu: 0.0,
            nu: 0.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: Vec3::zeros(),
            sigma: 0.0,
            tau: 0.0,
        };
        let mean = Vec3::new(0.1, 0.2, 0.3);
        let stats = vec![zero; 10];
        let pool: Vec<usize> = (0..10).collect();
        assert_eq!(voter.vote_scale(&stats, &pool, &mean).unwrap(), mean);
        assert!(voter.vote_scale(&stats, &[], &mean).is_err());
    }

    #[test]
    fn symmetric_gamma_noise_averages_out() {
        let voter = small_voter();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth = Vec3::new(0.1f64, -0.2, 0.05);
        let noise = 0.3;
        let stats: Vec<_> = (0..10_000)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let x: f64 = rng.random_range(0.0..noise);
                PairStatistics {
                    mu: 0.0,
                    nu: 0.0,
                    alpha: 0.0,
                    beta: 0.0,
                    gamma: truth + Vec3::repeat(sign * x),
                    sigma: 0.0,
                    tau: 0.0,
                }
            })
            .collect();
        let pool: Vec<usize> = (0..stats.len()).collect();
        let mean = Vec3::new(0.2, 0.2, 0.2);
        let s = voter.vote_scale(&stats, &pool, &mean).unwrap();
        let expect = truth.map(f64::exp).component_mul(&mean);
        // noise floor of the mean: sd(x)/sqrt(n) ≈ 0.17 / 100
        for a in 0..3 {
            assert!(((s[a] / expect[a]).ln()).abs() < 3.0 * 0.0017);
        }
    }
}
