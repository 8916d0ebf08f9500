mod common;

use common::{random_scene, tabletop_scene_in};
use cppf::ppf::sample_pairs;
use cppf::predictor::{oracle_corrupted, oracle_exact, predict_all, NoiseSigmas};
use cppf::scenegen::builtin_library;
use cppf::voting::{Voter, VotingConfig};

fn small_config(seed: u64) -> VotingConfig<f64> {
    VotingConfig {
        n_pairs: 30_000,
        seed,
        ..VotingConfig::default()
    }
}

#[test]
fn exact_oracle_recovers_tabletop_poses() {
    let lib = builtin_library();
    for (k, mesh) in ["house", "cylinder", "cone"].into_iter().enumerate() {
        let rs = tabletop_scene_in(&lib, 50 + k as u64, mesh, 8000);
        let voter = Voter::new(small_config(k as u64)).unwrap();
        let est = voter
            .estimate(&rs.scene.cloud, &oracle_exact(rs.pose, rs.mean_scale), &rs.mean_scale)
            .unwrap();
        let p = est.pose;
        assert!((p.t - rs.pose.t).norm() < 0.01, "{mesh}: t off by {}", (p.t - rs.pose.t).norm());
        assert!(p.e1.angle(&rs.pose.e1).to_degrees() < 3.0, "{mesh}: e1");
        assert!(p.e2.angle(&rs.pose.e2).to_degrees() < 3.0, "{mesh}: e2");
        assert!((p.s - rs.pose.s).norm() < 1e-9 * rs.pose.s.norm());
    }
}

#[test]
fn same_seed_gives_bit_identical_pose() {
    let rs = random_scene(7, "house", 5000);
    let run = || {
        Voter::new(small_config(3))
            .unwrap()
            .estimate(&rs.scene.cloud, &oracle_exact(rs.pose, rs.mean_scale), &rs.mean_scale)
            .unwrap()
            .pose
    };
    let (a, b) = (run(), run());
    assert_eq!(a.t, b.t);
    assert_eq!(a.e1, b.e1);
    assert_eq!(a.e2, b.e2);
    assert_eq!(a.s, b.s);
}

/// Around the true center, back-tracing keeps nearly every exact pair and
/// rejects nearly every outlier.
#[test]
fn backtrace_separates_outliers() {
    let lib = builtin_library();
    let rs = tabletop_scene_in(&lib, 77, "house", 8000);
    let cfg = small_config(5);
    let voter = Voter::new(cfg.clone()).unwrap();
    let oracle = oracle_corrupted(rs.pose, rs.mean_scale, 0.3, NoiseSigmas::zero(), 11).unwrap();
    let pairs = sample_pairs(&rs.scene.cloud, cfg.n_pairs, cfg.seed).unwrap();
    let (stats, _) = predict_all(&oracle, &pairs).unwrap();
    let bt = voter
        .backtrace_filter(rs.scene.cloud.len(), &pairs, &stats, &rs.pose.t, cfg.epsilon)
        .unwrap();
    let mut kept = vec![false; pairs.len()];
    for &i in &bt.pool {
        kept[i] = true;
    }
    let (mut inl, mut inl_kept, mut out, mut out_kept) = (0usize, 0usize, 0usize, 0usize);
    for (p, k) in pairs.iter().zip(&kept) {
        if oracle.is_outlier(p.i, p.j) {
            out += 1;
            out_kept += usize::from(*k);
        } else {
            inl += 1;
            inl_kept += usize::from(*k);
        }
    }
    let (ri, ro) = (inl_kept as f64 / inl as f64, out_kept as f64 / out as f64);
    assert!(ri >= 0.95, "inliers kept {ri:.3}");
    assert!(ro <= 0.10, "outliers kept {ro:.3}");
}

#[test]
fn disabled_backtrace_still_votes_a_pose() {
    let rs = random_scene(9, "sphere", 4000);
    let cfg = VotingConfig {
        coarse_to_fine: false,
        ..small_config(1)
    };
    let est = Voter::new(cfg)
        .unwrap()
        .estimate(&rs.scene.cloud, &oracle_exact(rs.pose, rs.mean_scale), &rs.mean_scale)
        .unwrap();
    assert_eq!(est.pool_size, 30_000);
    assert!((est.pose.t - rs.pose.t).norm() < 0.01);
}
