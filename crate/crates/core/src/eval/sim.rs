//! Simulated gaze traces over ground-truth lesions.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{convolve_separable, gaussian_kernel};
use crate::gaze::{GazeSample, GazeTrace};
use crate::raster::{connected_components, Frame, Mask, PixelPoint};

pub const SAMPLES_PER_FIXATION: usize = 10;
pub const SAMPLE_PERIOD_MS: f64 = 1000.0 / 60.0;
/// Pause between fixations.
pub const SACCADE_MS: f64 = 150.0;
/// Distractors stay this far from any lesion.
const DISTRACTOR_CLEARANCE: u32 = 12;
/// A pixel is vessel-dark below this fraction of its local mean.
const DARK_RATIO: f64 = 0.85;
const LOCAL_SIGMA: f64 = 8.0;
/// Luma below which a pixel is outside the fundus.
const FUNDUS_MIN: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeSimParams {
    pub seed: u64,
    /// Standard deviation of a fixation centre around its lesion centroid.
    pub jitter_sigma_px: f64,
    /// Fixations per lesion.
    pub n_fixations: usize,
    /// Distractor fixations per lesion fixation.
    pub distractor_rate: f64,
}

impl Default for GazeSimParams {
    fn default() -> Self {
        Self {
            seed: 0,
            jitter_sigma_px: 25.0,
            n_fixations: 2,
            distractor_rate: 0.2,
        }
    }
}

fn centroid(points: &[PixelPoint]) -> (f64, f64) {
    let n = points.len() as f64;
    (
        points.iter().map(|p| p.x as f64).sum::<f64>() / n,
        points.iter().map(|p| p.y as f64).sum::<f64>() / n,
    )
}

/// Fundus pixels clearly darker than their neighbourhood (vessels), away
/// from every lesion. Row-major.
fn distractor_sites(gt: &Mask, frame: &Frame) -> Vec<PixelPoint> {
    let gray = frame.gray();
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let local = convolve_separable(gray.values(), w, h, &gaussian_kernel(LOCAL_SIGMA));
    let near_gt = gt.dilate(DISTRACTOR_CLEARANCE);
    gray.values()
        .iter()
        .zip(&local)
        .enumerate()
        .filter(|(_, (&v, &m))| v > FUNDUS_MIN && v < DARK_RATIO * m)
        .map(|(i, _)| PixelPoint::new((i % w) as u32, (i / w) as u32))
        .filter(|p| !near_gt.get(p.x, p.y))
        .collect()
}

/// Fixation bursts of 10 samples at 60 Hz: `n_fixations` per ground-truth
/// component, centred on its centroid plus Gaussian jitter, and
/// `round(distractor_rate · lesion fixations)` (at least one when the rate
/// is positive) on dark non-lesion fundus pixels. Fixations are shuffled;
/// samples are clamped to the frame.
pub fn simulate_gaze(gt: &Mask, frame: &Frame, image_id: &str, params: &GazeSimParams) -> Result<GazeTrace> {
    if gt.dims() != frame.dims() {
        return Err(Error::DimensionMismatch {
            expected: frame.dims(),
            actual: gt.dims(),
        });
    }
    if !(params.jitter_sigma_px >= 0.0 && params.jitter_sigma_px.is_finite()) {
        return Err(Error::invalid("jitter_sigma_px", "must be non-negative"));
    }
    if !(params.distractor_rate >= 0.0 && params.distractor_rate.is_finite()) {
        return Err(Error::invalid("distractor_rate", "must be non-negative"));
    }
    let components = connected_components(gt);
    if components.is_empty() && params.distractor_rate == 0.0 {
        return Err(Error::invalid(
            "distractor_rate",
            "must be positive when the ground truth has no lesions",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let jitter = Normal::new(0.0, params.jitter_sigma_px).expect("valid sigma");
    let tremor = Normal::new(0.0, params.jitter_sigma_px / 10.0).expect("valid sigma");

    let mut centres: Vec<(f64, f64)> = Vec::new();
    for comp in &components {
        let c = centroid(comp);
        for _ in 0..params.n_fixations {
            centres.push((c.0 + jitter.sample(&mut rng), c.1 + jitter.sample(&mut rng)));
        }
    }
    if params.distractor_rate > 0.0 {
        let n = ((params.distractor_rate * centres.len() as f64).round() as usize).max(1);
        let sites = distractor_sites(gt, frame);
        for _ in 0..n {
            let p = match sites.choose(&mut rng) {
                Some(p) => *p,
                None => PixelPoint::new(
                    rng.random_range(0..frame.width()),
                    rng.random_range(0..frame.height()),
                ),
            };
            centres.push((p.x as f64, p.y as f64));
        }
    }
    // Fisher-Yates with the seeded generator
    for i in (1..centres.len()).rev() {
        let j = rng.random_range(0..=i);
        centres.swap(i, j);
    }

    let (xmax, ymax) = ((frame.width() - 1) as f64, (frame.height() - 1) as f64);
    let mut samples = Vec::with_capacity(centres.len() * SAMPLES_PER_FIXATION);
    let mut t = 0.0;
    for c in centres {
        let c = (c.0.clamp(0.0, xmax), c.1.clamp(0.0, ymax));
        for _ in 0..SAMPLES_PER_FIXATION {
            let x = (c.0 + tremor.sample(&mut rng)).clamp(0.0, xmax);
            let y = (c.1 + tremor.sample(&mut rng)).clamp(0.0, ymax);
            samples.push(GazeSample::new(t, x, y));
            t += SAMPLE_PERIOD_MS;
        }
        t += SACCADE_MS;
    }
    Ok(GazeTrace::new(image_id, samples))
}
