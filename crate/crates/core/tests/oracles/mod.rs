//! Slow reference implementations used to check the library.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Exact minimum barrier distance to the image border over 4-connected
/// paths. For every level `l`, a minimax Dijkstra restricted to pixels at or
/// above `l` gives the least path maximum `U_l`; the barrier is the minimum
/// of `U_l - l` over all levels. Values must be non-negative.
pub fn mbd_exact(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    assert_eq!(values.len(), w * h);
    assert!(values.iter().all(|v| *v >= 0.0));
    let mut levels: Vec<f64> = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut best = vec![f64::INFINITY; w * h];
    let key = |v: f64| v.to_bits(); // order-preserving for v >= 0
    for &l in &levels {
        let mut upper = vec![f64::INFINITY; w * h];
        let mut heap = BinaryHeap::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && values[i] >= l {
                    upper[i] = values[i];
                    heap.push(Reverse((key(values[i]), i)));
                }
            }
        }
        while let Some(Reverse((k, i))) = heap.pop() {
            if k != key(upper[i]) {
                continue;
            }
            let (x, y) = (i % w, i / w);
            let mut nbrs = Vec::with_capacity(4);
            if x > 0 {
                nbrs.push(i - 1);
            }
            if x + 1 < w {
                nbrs.push(i + 1);
            }
            if y > 0 {
                nbrs.push(i - w);
            }
            if y + 1 < h {
                nbrs.push(i + w);
            }
            for j in nbrs {
                if values[j] < l {
                    continue;
                }
                let u = upper[i].max(values[j]);
                if u < upper[j] {
                    upper[j] = u;
                    heap.push(Reverse((key(u), j)));
                }
            }
        }
        for i in 0..w * h {
            if upper[i].is_finite() {
                best[i] = best[i].min(upper[i] - l);
            }
        }
    }
    best
}

/// AUPR by recounting precision and recall from scratch at every distinct
/// threshold. `scores[i]` is `None` for pixels no prediction covers.
/// Interpolated precision at recall `r` is the best precision at any recall
/// `>= r`.
pub fn aupr_bruteforce(scores: &[Option<f64>], gt: &[bool]) -> f64 {
    let positives = gt.iter().filter(|g| **g).count();
    assert!(positives > 0);
    let mut thresholds: Vec<f64> = scores.iter().flatten().copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let mut tp = 0;
            let mut fp = 0;
            for (s, &g) in scores.iter().zip(gt) {
                if s.is_some_and(|s| s >= t) {
                    if g {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect();
    let mut area = 0.0;
    let mut prev = 0.0;
    for &(r, _) in &curve {
        let interp = curve
            .iter()
            .filter(|(r2, _)| *r2 >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        area += (r - prev) * interp;
        prev = r;
    }
    area
}

pub fn dice_bruteforce(pred: &[bool], gt: &[bool]) -> f64 {
    let inter = pred.iter().zip(gt).filter(|(p, g)| **p && **g).count();
    let total = pred.iter().filter(|p| **p).count() + gt.iter().filter(|g| **g).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

fn weighted_distance_sum(points: &[(f64, f64)], weights: &[f64], c: (f64, f64)) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt())
        .sum()
}

/// Weighted geometric median by coarse-to-fine grid search over the
/// points' bounding box. The objective is convex, so each refinement stays
/// around the previous minimiser.
pub fn geometric_median_grid(points: &[(f64, f64)], weights: &[f64]) -> (f64, f64) {
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.0);
        x1 = x1.max(p.0);
        y0 = y0.min(p.1);
        y1 = y1.max(p.1);
    }
    let mut step = 1.0;
    let mut best = (x0, y0);
    let mut best_f = f64::INFINITY;
    loop {
        let nx = ((x1 - x0) / step).ceil() as usize;
        let ny = ((y1 - y0) / step).ceil() as usize;
        for j in 0..=ny {
            for i in 0..=nx {
                let c = (x0 + i as f64 * step, y0 + j as f64 * step);
                let f = weighted_distance_sum(points, weights, c);
                if f < best_f {
                    best_f = f;
                    best = c;
                }
            }
        }
        if step < 0.01 {
            return best;
        }
        x0 = best.0 - 2.0 * step;
        x1 = best.0 + 2.0 * step;
        y0 = best.1 - 2.0 * step;
        y1 = best.1 + 2.0 * step;
        step /= 10.0;
    }
}

/// Population standard deviation by Welford's update.
pub fn std_welford(values: &[f64]) -> f64 {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    if values.is_empty() {
        0.0
    } else {
        (m2 / values.len() as f64).sqrt()
    }
}

/// Truncated Gaussian splat evaluated pixel by pixel from its definition.
pub fn gaze_map_direct(points: &[(f64, f64)], w: u32, h: u32, sigma: f64) -> Vec<f64> {
    let amp = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            for &(px, py) in points {
                let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                if d2 <= 9.0 * sigma * sigma {
                    v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
            out[(y * w + x) as usize] = v;
        }
    }
    out
}
