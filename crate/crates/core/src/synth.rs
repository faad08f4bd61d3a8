//! Deterministic synthetic fundus images with microaneurysm ground truth.
//!
//! An image is an orange disk on black with vignetting, gentle
//! low-frequency texture, fine choroidal grain and sensor noise, dark-red
//! vessels drawn as quadratic Bézier strokes, an optic disc and a fovea,
//! and small lesions. A lesion is a flat fill, darker and redder than the
//! grain-free background under it. Ground truth marks pixels at least half
//! covered by a lesion; those take the full lesion colour and the less
//! covered rim blends by coverage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{convolve_separable, gaussian_kernel};
use crate::raster::{Frame, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub image_dims: (u32, u32),
    pub n_lesions: usize,
    /// Lesion radius range in pixels, inclusive.
    pub lesion_radius_px: (f64, f64),
    pub vessel_count: usize,
    /// Fundus colour at the centre of the field.
    pub background_tint: [u8; 3],
    /// Fractional luminance drop of a lesion relative to its background.
    pub contrast: f64,
    /// Per-channel Gaussian noise, in 8-bit levels.
    pub noise_sigma: f64,
    /// Standard deviation of the relative gain of the fine background grain.
    pub grain: f64,
    /// Render the optic disc and the fovea.
    pub anatomy: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            image_dims: (512, 512),
            n_lesions: 5,
            lesion_radius_px: (3.0, 8.0),
            vessel_count: 8,
            background_tint: [205, 100, 50],
            contrast: 0.35,
            noise_sigma: 1.5,
            grain: 0.05,
            anatomy: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub center: (f64, f64),
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub frame: Frame,
    pub gt: Mask,
    pub lesions: Vec<Lesion>,
    /// Pixels at least half covered by a vessel stroke.
    pub vessels: Mask,
}

/// Lesions keep this much clearance from vessel strokes.
const VESSEL_CLEARANCE: f64 = 4.0;
const PLACEMENT_ATTEMPTS: usize = 2000;
/// Supersampling factor per axis for lesion coverage.
const SUPERSAMPLE: u32 = 4;
/// Correlation length of the grain, in pixels.
const GRAIN_SIGMA: f64 = 1.0;

struct Field {
    w: usize,
    /// Linear RGB accumulation in 8-bit units before noise.
    rgb: Vec<[f64; 3]>,
}

impl Field {
    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.w + x
    }

    fn blend(&mut self, x: usize, y: usize, target: [f64; 3], alpha: f64) {
        let i = self.idx(x, y);
        let px = &mut self.rgb[i];
        for c in 0..3 {
            px[c] += (target[c] - px[c]) * alpha;
        }
    }

    fn scale(&mut self, x: usize, y: usize, factors: [f64; 3], alpha: f64) {
        let i = self.idx(x, y);
        let px = self.rgb[i];
        let target = [px[0] * factors[0], px[1] * factors[1], px[2] * factors[2]];
        self.blend(x, y, target, alpha);
    }
}

/// Gaussian white noise blurred to a short correlation length and rescaled
/// to standard deviation `sigma`.
fn grain_field(rng: &mut ChaCha8Rng, w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; w * h];
    }
    let white = Normal::new(0.0, 1.0).expect("unit normal");
    let raw: Vec<f64> = (0..w * h).map(|_| white.sample(rng)).collect();
    let taps = gaussian_kernel(GRAIN_SIGMA);
    let smooth = convolve_separable(&raw, w, h, &taps);
    // the blur divides the variance by the squared norm of the 2-D kernel
    let norm: f64 = taps.iter().map(|t| t * t).sum::<f64>();
    smooth.into_iter().map(|v| v * sigma / norm).collect()
}

fn quad_bezier(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    (
        u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0,
        u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1,
    )
}

/// Renders one synthetic fundus image.
pub fn generate(spec: &SynthSpec) -> Result<SynthImage> {
    let (w, h) = spec.image_dims;
    if w < 64 || h < 64 {
        return Err(Error::invalid("image_dims", "both sides must be at least 64"));
    }
    let (rmin, rmax) = spec.lesion_radius_px;
    if !(rmin >= 1.0 && rmax >= rmin) {
        return Err(Error::invalid("lesion_radius_px", "need 1 <= min <= max"));
    }
    if !(0.0..1.0).contains(&spec.contrast) {
        return Err(Error::invalid("contrast", "must lie in [0, 1)"));
    }
    if !(0.0..0.25).contains(&spec.grain) {
        return Err(Error::invalid("grain", "must lie in [0, 0.25)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (wf, hf) = (w as f64, h as f64);
    let (cx, cy) = ((wf - 1.0) / 2.0, (hf - 1.0) / 2.0);
    let radius = 0.47 * wf.min(hf);
    let tint = spec.background_tint.map(|c| c as f64);

    // low-frequency texture: a few oriented sinusoids
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let period = rng.random_range(90.0..220.0);
            let k = 2.0 * std::f64::consts::PI / period;
            (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..6.3), 0.012)
        })
        .collect();
    let grain = grain_field(&mut rng, w as usize, h as usize, spec.grain);

    let mut field = Field {
        w: w as usize,
        rgb: vec![[0.0; 3]; (w * h) as usize],
    };
    for y in 0..h as usize {
        for x in 0..w as usize {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let r = (dx * dx + dy * dy).sqrt();
            let inside = (radius - r + 0.5).clamp(0.0, 1.0);
            if inside == 0.0 {
                continue;
            }
            let vignette = 1.0 - 0.3 * (r / radius).powi(2);
            let texture: f64 = waves
                .iter()
                .map(|&(kx, ky, phase, amp)| amp * (kx * x as f64 + ky * y as f64 + phase).sin())
                .sum();
            let gain = inside * vignette * (1.0 + texture + grain[y * w as usize + x]);
            let i = field.idx(x, y);
            field.rgb[i] = tint.map(|c| c * gain);
        }
    }

    // anatomy: optic disc on one side, fovea on the other
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let disc = (cx + side * 0.55 * radius, cy + rng.random_range(-0.1..0.1) * radius);
    let disc_r = 0.13 * radius;
    let fovea = (cx - side * 0.25 * radius, cy + rng.random_range(-0.08..0.08) * radius);
    let fovea_sigma = 0.08 * radius;
    if spec.anatomy {
        let reach = (disc_r * 1.6) as i64;
        for y in (disc.1 as i64 - reach).max(0)..(disc.1 as i64 + reach).min(h as i64) {
            for x in (disc.0 as i64 - reach).max(0)..(disc.0 as i64 + reach).min(w as i64) {
                let d = ((x as f64 - disc.0).powi(2) + (y as f64 - disc.1).powi(2)).sqrt();
                let alpha = 0.85 * (1.0 - ((d - disc_r) / (0.5 * disc_r)).clamp(0.0, 1.0));
                if alpha > 0.0 {
                    field.blend(x as usize, y as usize, [250.0, 215.0, 140.0], alpha);
                }
            }
        }
        let reach = (fovea_sigma * 3.5) as i64;
        for y in (fovea.1 as i64 - reach).max(0)..(fovea.1 as i64 + reach).min(h as i64) {
            for x in (fovea.0 as i64 - reach).max(0)..(fovea.0 as i64 + reach).min(w as i64) {
                let d2 = (x as f64 - fovea.0).powi(2) + (y as f64 - fovea.1).powi(2);
                let alpha = (-d2 / (2.0 * fovea_sigma * fovea_sigma)).exp();
                field.scale(x as usize, y as usize, [0.7, 0.72, 0.75], alpha);
            }
        }
    }

    // vessels: curves leaving the disc towards the periphery
    let mut vessel_cov = vec![0.0f64; (w * h) as usize];
    for _ in 0..spec.vessel_count {
        let start = (
            disc.0 + rng.random_range(-0.5..0.5) * disc_r,
            disc.1 + rng.random_range(-0.5..0.5) * disc_r,
        );
        let angle = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let length = rng.random_range(0.6..1.3) * radius;
        let end = (start.0 + length * angle.cos(), start.1 + length * angle.sin());
        let bend = rng.random_range(-0.4..0.4) * length;
        let mid = (
            (start.0 + end.0) / 2.0 - bend * angle.sin(),
            (start.1 + end.1) / 2.0 + bend * angle.cos(),
        );
        let width0 = rng.random_range(4.0..7.0);
        let steps = (length * 3.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (px, py) = quad_bezier(start, mid, end, t);
            let half = width0 * (1.0 - 0.5 * t) / 2.0;
            let reach = (half + 1.5).ceil() as i64;
            for y in (py as i64 - reach).max(0)..=(py as i64 + reach).min(h as i64 - 1) {
                for x in (px as i64 - reach).max(0)..=(px as i64 + reach).min(w as i64 - 1) {
                    let d = ((x as f64 - px).powi(2) + (y as f64 - py).powi(2)).sqrt();
                    let cov = (half - d + 0.5).clamp(0.0, 1.0);
                    let i = y as usize * w as usize + x as usize;
                    if cov > vessel_cov[i] {
                        vessel_cov[i] = cov;
                    }
                }
            }
        }
    }
    for y in 0..h as usize {
        for x in 0..w as usize {
            let cov = vessel_cov[y * w as usize + x];
            if cov > 0.0 {
                field.scale(x, y, [0.78, 0.55, 0.6], cov);
            }
        }
    }
    let vessels = Mask::from_bits(w, h, vessel_cov.iter().map(|&c| c >= 0.5).collect())?;

    // lesions
    let mut lesions: Vec<Lesion> = Vec::with_capacity(spec.n_lesions);
    let near_vessel = |c: (f64, f64), r: f64| {
        let reach = (r + VESSEL_CLEARANCE).ceil() as i64;
        for y in (c.1 as i64 - reach).max(0)..=(c.1 as i64 + reach).min(h as i64 - 1) {
            for x in (c.0 as i64 - reach).max(0)..=(c.0 as i64 + reach).min(w as i64 - 1) {
                let d = ((x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2)).sqrt();
                if d <= r + VESSEL_CLEARANCE && vessel_cov[y as usize * w as usize + x as usize] > 0.0 {
                    return true;
                }
            }
        }
        false
    };
    for k in 0..spec.n_lesions {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let r = rng.random_range(rmin..=rmax);
            let rho = radius * 0.8 * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            let c = (cx + rho * phi.cos(), cy + rho * phi.sin());
            let border = 2.0 * r;
            if c.0 < border || c.1 < border || c.0 > wf - 1.0 - border || c.1 > hf - 1.0 - border {
                continue;
            }
            let dist = |p: (f64, f64)| ((c.0 - p.0).powi(2) + (c.1 - p.1).powi(2)).sqrt();
            if spec.anatomy && (dist(disc) < 1.7 * disc_r + r || dist(fovea) < 3.0 * fovea_sigma + r) {
                continue;
            }
            if lesions.iter().any(|l| dist(l.center) < l.radius + r + 8.0) {
                continue;
            }
            if near_vessel(c, r) {
                continue;
            }
            placed = Some(Lesion { center: c, radius: r });
            break;
        }
        let lesion = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place lesion {} of {} clear of vessels and other lesions after {PLACEMENT_ATTEMPTS} attempts",
                k + 1,
                spec.n_lesions
            ))
        })?;
        lesions.push(lesion);
    }

    let mut gt = Mask::new(w, h);
    let k = spec.contrast;
    // green drops most, so the lesion is redder (higher a*) than its ground
    let factors = [1.0 - 0.55 * k, 1.0 - 1.25 * k, 1.0 - 1.1 * k].map(|f: f64| f.max(0.05));
    for l in &lesions {
        let reach = (l.radius + 1.0).ceil() as i64;
        for y in (l.center.1 as i64 - reach).max(0)..=(l.center.1 as i64 + reach).min(h as i64 - 1) {
            for x in (l.center.0 as i64 - reach).max(0)..=(l.center.0 as i64 + reach).min(w as i64 - 1) {
                let mut hits = 0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let ox = x as f64 - 0.5 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        let oy = y as f64 - 0.5 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        if (ox - l.center.0).powi(2) + (oy - l.center.1).powi(2) <= l.radius * l.radius {
                            hits += 1;
                        }
                    }
                }
                if hits == 0 {
                    continue;
                }
                let cov = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let i = field.idx(x as usize, y as usize);
                let g = 1.0 + grain[i];
                let target = [0, 1, 2].map(|c| field.rgb[i][c] / g * factors[c]);
                // ground-truth pixels take the full lesion colour, the rim
                // outside it blends by coverage
                let inside = cov >= 0.5;
                field.blend(x as usize, y as usize, target, if inside { 1.0 } else { cov });
                if inside {
                    gt.set(x as u32, y as u32, true);
                }
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    let mut pixels = Vec::with_capacity((w * h * 3) as usize);
    for px in &field.rgb {
        let dark = px.iter().all(|&c| c == 0.0);
        for &c in px {
            let n = if dark { 0.0 } else { noise.sample(&mut rng) };
            pixels.push((c + n).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(SynthImage {
        frame: Frame::new(w, h, pixels)?,
        gt,
        lesions,
        vessels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::connected_components;

    #[test]
    fn no_lesions_gives_empty_gt() {
        let s = generate(&SynthSpec {
            n_lesions: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(s.gt.is_empty());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let spec = SynthSpec {
            seed: 42,
            image_dims: (160, 128),
            ..Default::default()
        };
        assert_eq!(generate(&spec).unwrap().frame, generate(&spec).unwrap().frame);
        let other = SynthSpec { seed: 43, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().frame, generate(&other).unwrap().frame);
    }

    #[test]
    fn five_lesions_five_components() {
        for seed in 0..5 {
            let s = generate(&SynthSpec {
                seed,
                ..Default::default()
            })
            .unwrap();
            let comps = connected_components(&s.gt);
            assert_eq!(comps.len(), 5, "seed {seed}");
            let lo = std::f64::consts::PI * (3.0f64 - 1.0).powi(2);
            let hi = std::f64::consts::PI * (8.0f64 + 1.0).powi(2);
            for c in &comps {
                let area = c.len() as f64;
                assert!(area >= lo && area <= hi, "seed {seed} area {area}");
            }
        }
    }

    #[test]
    fn infeasible_placement_reports_constraint() {
        let err = generate(&SynthSpec {
            image_dims: (64, 64),
            n_lesions: 60,
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("could not place lesion"));
    }
}
