mod oracles;

use std::f64::consts::PI;
use std::time::Instant;

use glanceseg::gaze::{ads, ads_points, build_gaze_map, kernel_amplitude, weighted_geometric_median};
use glanceseg::{GazeAccumulator, GazeSample, GazeTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 25.0;

fn trace(points: &[(f64, f64)]) -> GazeTrace {
    let samples = points
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| GazeSample::new(k as f64 * 16.0, x, y))
        .collect();
    GazeTrace::new("t", samples)
}

fn map_of(points: &[(f64, f64)], dims: (u32, u32)) -> Vec<f64> {
    build_gaze_map(&trace(points), dims, SIGMA).unwrap().map.values().to_vec()
}

#[test]
fn single_sample_peak_value() {
    let m = build_gaze_map(&trace(&[(60.0, 70.0)]), (160, 150), SIGMA).unwrap();
    let expected = 1.0 / ((2.0 * PI).sqrt() * 25.0);
    assert!((m.map.max() - expected).abs() <= 1e-9);
    assert_eq!(m.map.get(60, 70), m.map.max());
    assert_eq!(kernel_amplitude(SIGMA), expected);
}

#[test]
fn matches_direct_evaluation() {
    let pts = [(10.0, 12.0), (50.5, 40.25), (79.0, 0.0)];
    let fast = map_of(&pts, (80, 60));
    let slow = oracles::gaze_map_direct(&pts, 80, 60, SIGMA);
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn additive_over_traces() {
    let a = [(30.0, 40.0), (31.5, 44.0)];
    let b = [(100.0, 20.0), (35.0, 41.0), (0.0, 99.0)];
    let both: Vec<(f64, f64)> = a.iter().chain(&b).copied().collect();
    let (ma, mb, mab) = (map_of(&a, (128, 100)), map_of(&b, (128, 100)), map_of(&both, (128, 100)));
    for i in 0..ma.len() {
        assert!((ma[i] + mb[i] - mab[i]).abs() <= 1e-12);
    }
}

#[test]
fn equivariant_to_translation() {
    let (w, h) = (300u32, 260u32);
    let pts = [(100.0, 90.0), (120.3, 95.6), (110.0, 130.0)];
    let (dx, dy) = (37i64, 21i64);
    let moved: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 + dx as f64, p.1 + dy as f64)).collect();
    let m0 = map_of(&pts, (w, h));
    let m1 = map_of(&moved, (w, h));
    for y in 0..h as i64 - dy {
        for x in 0..w as i64 - dx {
            let a = m0[(y * w as i64 + x) as usize];
            let b = m1[((y + dy) * w as i64 + x + dx) as usize];
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn streaming_equals_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<(f64, f64)> = (0..40)
        .map(|_| (rng.random_range(0.0..200.0), rng.random_range(0.0..150.0)))
        .collect();
    let batch = build_gaze_map(&trace(&pts), (200, 150), SIGMA).unwrap();
    let mut acc = GazeAccumulator::new((200, 150), SIGMA).unwrap();
    for chunk in trace(&pts).samples.chunks(7) {
        acc.extend(chunk);
    }
    assert_eq!(acc.snapshot(), batch);
}

#[test]
fn ads_center_matches_grid_search() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let n = rng.random_range(3..30);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..400.0), rng.random_range(0.0..300.0)))
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let got = ads_points(&pts, &weights, (400, 300)).unwrap();
        let want = oracles::geometric_median_grid(&pts, &weights);
        let d = ((got.center.0 - want.0).powi(2) + (got.center.1 - want.1).powi(2)).sqrt();
        assert!(d <= 0.25, "centre off by {d}");
        let median = weighted_geometric_median(&pts, &weights).unwrap();
        assert_eq!(median, got.center);
    }
    assert!(t.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn ads_score_scales_with_spread() {
    let tight = build_gaze_map(&trace(&[(100.0, 100.0), (102.0, 100.0), (100.0, 103.0)]), (256, 256), SIGMA).unwrap();
    let loose = build_gaze_map(&trace(&[(20.0, 20.0), (230.0, 30.0), (120.0, 220.0)]), (256, 256), SIGMA).unwrap();
    let (a, b) = (ads(&tight).unwrap(), ads(&loose).unwrap());
    assert!(a.score < b.score);
    assert!(a.score >= 0.0);
}

#[test]
fn all_invalid_trace_is_empty() {
    let mut tr = trace(&[(1.0, 1.0)]);
    tr.samples[0].valid = false;
    assert!(build_gaze_map(&tr, (10, 10), SIGMA).is_err());
    assert!(build_gaze_map(&trace(&[]), (10, 10), SIGMA).is_err());
}
