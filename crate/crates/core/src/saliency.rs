//! Bottom-up attention maps.
//!
//! - Frequency-tuned (FT): distance in L*a*b* between the image mean and a
//!   lightly blurred image. The 5×5 binomial blur realises the π/2.75
//!   high-frequency cutoff.
//! - Minimum barrier distance (MBD): border-seeded raster-scan approximation
//!   on luminance. Each pixel tracks the highest (`U`) and lowest (`L`) value
//!   along its current best path, so every stored distance is the barrier of
//!   a real path and the approximation never underestimates.
//! - Weighted fusion and quantile binarisation into the salient point set.

use serde::{Deserialize, Serialize};

use crate::color::lab_planes;
use crate::error::{Error, Result};
use crate::filters::{binomial5, convolve_separable};
use crate::gaze::binarize_positive;
use crate::raster::{Frame, GrayMap, Mask, PixelPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SaliencyMethod {
    Ft,
    Mbd,
    Combined,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    /// Values in `[0, 1]`.
    pub map: GrayMap,
    pub method: SaliencyMethod,
    /// Set when the raw map was constant; the map is then all zeros.
    pub degenerate: bool,
}

const MIN_SIDE: u32 = 8;
const DEGENERATE_RANGE: f64 = 1e-9;

fn check_size(frame: &Frame) -> Result<()> {
    if frame.width() < MIN_SIDE || frame.height() < MIN_SIDE {
        return Err(Error::invalid(
            "roi_frame",
            format!("saliency needs at least {MIN_SIDE}x{MIN_SIDE}, got {:?}", frame.dims()),
        ));
    }
    Ok(())
}

/// Min-max normalisation. Constant maps become all zeros and are flagged.
pub fn normalize(raw: &GrayMap, method: SaliencyMethod) -> SaliencyMap {
    let (lo, hi) = (raw.min(), raw.max());
    if hi - lo <= DEGENERATE_RANGE {
        return SaliencyMap {
            map: GrayMap::zeros(raw.width(), raw.height()),
            method,
            degenerate: true,
        };
    }
    let scale = 1.0 / (hi - lo);
    let map = raw.map(|v| ((v - lo) * scale).clamp(0.0, 1.0)).expect("finite");
    SaliencyMap {
        map,
        method,
        degenerate: false,
    }
}

/// Unnormalised FT map from three row-major L*, a*, b* planes.
pub fn ft_raw_lab(lab: &[Vec<f64>; 3], width: u32, height: u32) -> Result<GrayMap> {
    let (w, h) = (width as usize, height as usize);
    let n = w * h;
    if lab.iter().any(|p| p.len() != n) {
        return Err(Error::invalid("lab", "plane size does not match dimensions"));
    }
    let taps = binomial5();
    let mut acc = vec![0.0; n];
    for plane in lab {
        let mean = plane.iter().sum::<f64>() / n as f64;
        let blurred = convolve_separable(plane, w, h, &taps);
        for (a, b) in acc.iter_mut().zip(&blurred) {
            *a += (mean - b).powi(2);
        }
    }
    GrayMap::new(width, height, acc.into_iter().map(f64::sqrt).collect())
}

pub fn ft_saliency(roi_frame: &Frame) -> Result<SaliencyMap> {
    check_size(roi_frame)?;
    let raw = ft_raw_lab(&lab_planes(roi_frame), roi_frame.width(), roi_frame.height())?;
    Ok(normalize(&raw, SaliencyMethod::Ft))
}

/// Raster-scan MBD distances from the image border, plus the number of
/// passes run. Stops after a pass that changes nothing or after `max_passes`.
pub fn mbd_raw(gray: &GrayMap, max_passes: u32) -> (GrayMap, u32) {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let img = gray.values();
    let mut dist = vec![f64::INFINITY; w * h];
    let mut upper = img.to_vec();
    let mut lower = img.to_vec();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                dist[y * w + x] = 0.0;
            }
        }
    }

    let relax = |dist: &mut [f64], upper: &mut [f64], lower: &mut [f64], i: usize, j: usize| -> bool {
        // extend the best path of neighbour j by pixel i
        let v = img[i];
        let u = upper[j].max(v);
        let l = lower[j].min(v);
        let barrier = u - l;
        if barrier < dist[i] {
            dist[i] = barrier;
            upper[i] = u;
            lower[i] = l;
            true
        } else {
            false
        }
    };

    let mut passes = 0;
    while passes < max_passes {
        let mut changed = false;
        if passes % 2 == 0 {
            for y in 1..h.saturating_sub(1) {
                for x in 1..w - 1 {
                    let i = y * w + x;
                    changed |= relax(&mut dist, &mut upper, &mut lower, i, i - w);
                    changed |= relax(&mut dist, &mut upper, &mut lower, i, i - 1);
                }
            }
        } else {
            for y in (1..h.saturating_sub(1)).rev() {
                for x in (1..w - 1).rev() {
                    let i = y * w + x;
                    changed |= relax(&mut dist, &mut upper, &mut lower, i, i + w);
                    changed |= relax(&mut dist, &mut upper, &mut lower, i, i + 1);
                }
            }
        }
        passes += 1;
        if !changed {
            break;
        }
    }
    let map = GrayMap::new(gray.width(), gray.height(), dist).expect("every pixel reached");
    (map, passes)
}

pub fn mbd_saliency(roi_frame: &Frame, max_passes: u32) -> Result<SaliencyMap> {
    check_size(roi_frame)?;
    if max_passes == 0 {
        return Err(Error::invalid("mbd_max_passes", "must be positive"));
    }
    let (raw, _) = mbd_raw(&roi_frame.gray(), max_passes);
    Ok(normalize(&raw, SaliencyMethod::Mbd))
}

/// `γ·ft + η·mbd`, renormalised to `[0, 1]`.
pub fn fuse(ft: &SaliencyMap, mbd: &SaliencyMap, gamma: f64, eta: f64) -> Result<SaliencyMap> {
    let raw = fuse_raw(&ft.map, &mbd.map, gamma, eta)?;
    Ok(normalize(&raw, SaliencyMethod::Combined))
}

/// The pre-normalisation weighted sum.
pub fn fuse_raw(ft: &GrayMap, mbd: &GrayMap, gamma: f64, eta: f64) -> Result<GrayMap> {
    if ft.dims() != mbd.dims() {
        return Err(Error::DimensionMismatch {
            expected: ft.dims(),
            actual: mbd.dims(),
        });
    }
    let values = ft
        .values()
        .iter()
        .zip(mbd.values())
        .map(|(a, b)| gamma * a + eta * b)
        .collect();
    GrayMap::new(ft.width(), ft.height(), values)
}

/// Thresholds at the `quantile` of the positive saliency values and returns
/// the binary map with its set pixels (`P_com`) in row-major order. A
/// degenerate map yields an empty set.
pub fn binarize_saliency(map: &SaliencyMap, quantile: f64) -> Result<(Mask, Vec<PixelPoint>)> {
    let (w, h) = map.map.dims();
    let mask = binarize_positive(&map.map, quantile)?.unwrap_or_else(|| Mask::new(w, h));
    let points = mask.points().collect();
    Ok((mask, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_degenerate() {
        let f = Frame::filled(16, 12, [120, 60, 30]).unwrap();
        let ft = ft_saliency(&f).unwrap();
        assert!(ft.degenerate && ft.map.max() == 0.0);
        let mbd = mbd_saliency(&f, 10).unwrap();
        assert!(mbd.degenerate && mbd.map.max() == 0.0);
    }

    #[test]
    fn too_small_rejected() {
        let f = Frame::filled(7, 20, [0, 0, 0]).unwrap();
        assert!(ft_saliency(&f).is_err());
        assert!(mbd_saliency(&f, 3).is_err());
    }

    #[test]
    fn mbd_border_is_zero_before_normalisation() {
        let mut values = vec![0.0; 100];
        for (i, v) in values.iter_mut().enumerate() {
            *v = ((i * 37) % 17) as f64;
        }
        let g = GrayMap::new(10, 10, values).unwrap();
        let (d, _) = mbd_raw(&g, 10);
        for i in 0..10 {
            assert_eq!(d.get(i, 0), 0.0);
            assert_eq!(d.get(i, 9), 0.0);
            assert_eq!(d.get(0, i), 0.0);
            assert_eq!(d.get(9, i), 0.0);
        }
    }

    #[test]
    fn mbd_enclosed_dark_blob() {
        // bright ring around a dark centre: barrier is ring - centre
        let mut values = vec![100.0; 11 * 11];
        for y in 3..8 {
            for x in 3..8 {
                values[y * 11 + x] = 200.0;
            }
        }
        values[5 * 11 + 5] = 10.0;
        let (d, passes) = mbd_raw(&GrayMap::new(11, 11, values).unwrap(), 10);
        assert_eq!(d.get(5, 5), 190.0);
        assert_eq!(d.get(4, 4), 100.0);
        assert!(passes >= 2);
    }

    #[test]
    fn fuse_identities() {
        let a = normalize(&GrayMap::new(2, 2, vec![0.0, 0.2, 0.7, 1.0]).unwrap(), SaliencyMethod::Ft);
        let b = normalize(&GrayMap::new(2, 2, vec![1.0, 0.0, 0.5, 0.1]).unwrap(), SaliencyMethod::Mbd);
        assert_eq!(fuse(&a, &b, 1.0, 0.0).unwrap().map, a.map);
        assert_eq!(fuse(&a, &a, 0.5, 0.5).unwrap().map, a.map);
        let small = normalize(&GrayMap::new(1, 2, vec![0.0, 1.0]).unwrap(), SaliencyMethod::Mbd);
        assert!(fuse(&a, &small, 0.5, 0.5).is_err());
    }

    #[test]
    fn fuse_hand_computed_4x4() {
        let ft: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let mbd: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let a = SaliencyMap {
            map: GrayMap::new(4, 4, ft.clone()).unwrap(),
            method: SaliencyMethod::Ft,
            degenerate: false,
        };
        let b = SaliencyMap {
            map: GrayMap::new(4, 4, mbd.clone()).unwrap(),
            method: SaliencyMethod::Mbd,
            degenerate: false,
        };
        let fused = fuse(&a, &b, 0.5, 0.5).unwrap();
        // means: even i -> (i/15 + 1)/2, odd i -> i/30. Range [1/30, 29/30]
        // (i=1 gives 1/30; i=14 gives 29/30).
        let (lo, hi) = (1.0 / 30.0, 29.0 / 30.0);
        for i in 0..16 {
            let mean = if i % 2 == 0 { (i as f64 / 15.0 + 1.0) / 2.0 } else { i as f64 / 30.0 };
            let expected = (mean - lo) / (hi - lo);
            assert!((fused.map.values()[i] - expected).abs() < 1e-12, "index {i}");
        }
        assert_eq!(fused.method, SaliencyMethod::Combined);
    }

    #[test]
    fn binarize_ramp_count() {
        let n = 200u32;
        let values: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / n as f64).collect();
        let s = SaliencyMap {
            map: GrayMap::new(n, 1, values).unwrap(),
            method: SaliencyMethod::Ft,
            degenerate: false,
        };
        let (_, pts) = binarize_saliency(&s, 0.9).unwrap();
        // top 10% of 200 distinct values
        assert!((pts.len() as i64 - 20).abs() <= 1, "{}", pts.len());
    }

    #[test]
    fn binarize_degenerate_and_blob() {
        let zero = SaliencyMap {
            map: GrayMap::zeros(8, 8),
            method: SaliencyMethod::Combined,
            degenerate: true,
        };
        assert!(binarize_saliency(&zero, 0.9).unwrap().1.is_empty());

        let mut values = vec![0.0; 64];
        let blob = [(3, 3), (4, 3), (3, 4), (4, 4)];
        for (x, y) in blob {
            values[y * 8 + x] = 1.0;
        }
        let s = SaliencyMap {
            map: GrayMap::new(8, 8, values).unwrap(),
            method: SaliencyMethod::Combined,
            degenerate: false,
        };
        let (_, pts) = binarize_saliency(&s, 0.9).unwrap();
        let expected: Vec<PixelPoint> = blob.iter().map(|&(x, y)| PixelPoint::new(x as u32, y as u32)).collect();
        let mut expected = expected;
        expected.sort();
        assert_eq!(pts, expected);
    }
}
