mod common;

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{perturbed, synth};
use vector_core::analysis::{image_summary, DEFAULT_BINS};
use vector_core::dataset::SyntheticConfig;
use vector_core::geometry::residual_records;
use vector_core::{
    angular_concentration, histogram, rank_images, rank_tracks, run_ba, slope_pairs, BAConfig,
    RankKey, ResidualKind, ResidualRecord,
};

fn record(v: Vector2<f64>, kind: ResidualKind) -> ResidualRecord {
    ResidualRecord::from_vector("C", "T", v, kind)
}

#[test]
fn histogram_matches_naive_tally_on_10k() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (lo, hi, n) = (0.0, 10.0, 20);
    let w = (hi - lo) / n as f64;
    let mut lengths: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..12.0)).collect();
    // exact edges and the range ends
    lengths.extend((0..=n).map(|i| lo + i as f64 * w));
    let records: Vec<_> = lengths
        .iter()
        .map(|&l| record(Vector2::new(l, 0.0), ResidualKind::Final))
        .collect();
    let h = histogram(&records, n, (lo, hi)).unwrap();
    assert_eq!(h.bin_edges.len(), n + 1);
    for (i, e) in h.bin_edges.iter().enumerate() {
        assert!((e - (lo + i as f64 * w)).abs() < 1e-12);
    }
    assert_eq!(*h.bin_edges.last().unwrap(), hi);

    let mut naive = vec![0u64; n];
    for &l in &lengths {
        let l = l.clamp(lo, hi);
        for b in 0..n {
            let (a, z) = (h.bin_edges[b], h.bin_edges[b + 1]);
            if (a <= l && l < z) || (b == n - 1 && l == z) {
                naive[b] += 1;
                break;
            }
        }
    }
    let counts: Vec<u64> = h.counts.iter().map(|&c| c as u64).collect();
    assert_eq!(counts, naive);
    assert_eq!(counts.iter().sum::<u64>(), lengths.len() as u64);
}

#[test]
fn circular_statistics_reference_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let uniform: Vec<_> = (0..1000)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            record(Vector2::new(a.cos(), a.sin()), ResidualKind::Final)
        })
        .collect();
    assert!(angular_concentration(&uniform).unwrap() < 0.1);
    let aligned: Vec<_> = (0..1000)
        .map(|_| record(Vector2::new(0.6, 0.8), ResidualKind::Final))
        .collect();
    assert!(angular_concentration(&aligned).unwrap() > 0.999);
    let pair = [
        record(Vector2::new(1.0, 0.0), ResidualKind::Final),
        record(Vector2::new(0.0, 1.0), ResidualKind::Final),
    ];
    let c = angular_concentration(&pair).unwrap();
    assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
}

#[test]
fn per_image_means_match_recomputation() {
    let d = synth(&perturbed(15, 300, 2.0, 0.05));
    let r = run_ba(&d, &BAConfig::default()).unwrap();
    let adjusted = r.apply_to(&d);
    let fin = residual_records(&adjusted.cameras, &adjusted.tracks, ResidualKind::Final).unwrap();
    let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for x in &fin {
        let e = sums.entry(x.camera_id.clone()).or_default();
        e.0 += x.length;
        e.1 = e.1.max(x.length);
        e.2 += 1;
    }
    let ranked = rank_images(&d, Some(&r), RankKey::MeanFinalLength).unwrap();
    assert_eq!(ranked.len(), sums.len());
    for img in &ranked {
        let (sum, max, n) = sums[&img.camera_id];
        assert_eq!(img.stats.n_observations, n);
        assert!((img.stats.mean_final_length - sum / n as f64).abs() < 1e-9);
        assert!((img.stats.max_final_length - max).abs() < 1e-9);
    }
    assert!(ranked
        .windows(2)
        .all(|w| w[0].stats.mean_final_length >= w[1].stats.mean_final_length));
}

#[test]
fn converged_runs_shrink_almost_every_residual() {
    for seed in 0..3 {
        let d = synth(&SyntheticConfig {
            seed,
            ..perturbed(20, 500, 2.0, 0.05)
        });
        let r = run_ba(&d, &BAConfig::default()).unwrap();
        assert!(r.converged);
        let s = slope_pairs(&r.residuals_initial, &r.residuals_final);
        assert_eq!(s.omitted, 0);
        let down = s
            .pairs
            .iter()
            .filter(|p| p.post_length <= p.pre_length)
            .count();
        let frac = down as f64 / s.pairs.len() as f64;
        assert!(frac >= 0.95, "seed {seed}: {frac}");
    }
}

#[test]
fn injected_outlier_track_ranks_first() {
    for seed in 0..3 {
        let d = synth(&SyntheticConfig {
            seed,
            n_outlier_tracks: 1,
            ..perturbed(20, 500, 2.0, 0.05)
        });
        let r = run_ba(&d, &BAConfig::default()).unwrap();
        let ranked = rank_tracks(&d, Some(&r), RankKey::MaxFinalLength).unwrap();
        assert_eq!(
            ranked[0].track_id,
            d.ground_truth.as_ref().unwrap().outlier_tracks[0]
        );
    }
}

#[test]
fn camera_with_the_only_bad_observation_ranks_first() {
    let mut d = synth(&perturbed(20, 500, 1.0, 0.02));
    // shift one central tiepoint by 50 px
    let (ti, oi) = d
        .tracks
        .iter()
        .enumerate()
        .skip(100)
        .find_map(|(ti, t)| {
            if t.observations.len() < 4 {
                return None;
            }
            t.observations
                .iter()
                .position(|o| (o.pixel - Vector2::new(640.0, 480.0)).norm() < 300.0)
                .map(|oi| (ti, oi))
        })
        .unwrap();
    d.tracks[ti].observations[oi].pixel += Vector2::new(30.0, -40.0);
    let bad_camera = d.tracks[ti].observations[oi].camera_id.clone();
    let r = run_ba(&d, &BAConfig::default()).unwrap();
    let ranked = rank_images(&d, Some(&r), RankKey::MaxFinalLength).unwrap();
    assert_eq!(ranked[0].camera_id, bad_camera);
}

#[test]
fn image_summary_agrees_with_global_statistics() {
    let d = synth(&perturbed(8, 120, 2.0, 0.05));
    let r = run_ba(&d, &BAConfig::default()).unwrap();
    let all: Vec<_> = r
        .residuals_initial
        .iter()
        .chain(&r.residuals_final)
        .cloned()
        .collect();
    let mut n_initial = 0;
    let mut n_final = 0;
    let mut pairs = 0;
    for c in &d.cameras {
        let own: Vec<_> = all
            .iter()
            .filter(|x| x.camera_id == c.id)
            .cloned()
            .collect();
        let s = image_summary(&c.id, &own);
        assert_eq!(s.histogram_initial.bin_edges, s.histogram_final.bin_edges);
        assert_eq!(s.histogram_initial.counts.len(), DEFAULT_BINS);
        assert_eq!(
            s.histogram_initial.counts.iter().sum::<usize>(),
            s.n_initial
        );
        assert_eq!(s.histogram_final.counts.iter().sum::<usize>(), s.n_final);
        assert_eq!(s.radial_initial.endpoints.len(), s.n_initial);
        n_initial += s.n_initial;
        n_final += s.n_final;
        pairs += s.slopes.pairs.len();
    }
    assert_eq!(n_initial, r.residuals_initial.len());
    assert_eq!(n_final, r.residuals_final.len());
    assert_eq!(pairs, d.observation_count());
}
