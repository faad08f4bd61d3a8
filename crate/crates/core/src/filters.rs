//! Separable convolution with edge replication.

/// Normalised 1-D Gaussian taps, radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// `[1 4 6 4 1] / 16`.
pub fn binomial5() -> Vec<f64> {
    [1.0, 4.0, 6.0, 4.0, 1.0].iter().map(|v| v / 16.0).collect()
}

/// Convolves a row-major plane with `taps` horizontally then vertically.
/// `taps` must have odd length.
pub fn convolve_separable(plane: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    debug_assert_eq!(taps.len() % 2, 1);
    let r = (taps.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[clamp(x as i64 + k as i64 - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp[clamp(y as i64 + k as i64 - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_sum_to_one() {
        for s in [0.5, 1.0, 4.27, 10.0] {
            assert!((gaussian_kernel(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((binomial5().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_plane_is_fixed_point() {
        let plane = vec![3.5; 7 * 5];
        let out = convolve_separable(&plane, 7, 5, &gaussian_kernel(2.0));
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }
}
