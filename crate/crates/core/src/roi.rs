//! Square regions of interest around high-attention components, and the
//! Gaussian unsharp enhancement applied to them.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::filters::{convolve_separable, gaussian_kernel};
use crate::gaze::GazeMap;
use crate::raster::{connected_components, Frame, Mask, PixelPoint};

#[derive(Clone, Debug, PartialEq)]
pub struct Roi {
    /// Top-left corner in frame coordinates.
    pub origin: PixelPoint,
    /// Side length of the square crop.
    pub size: u32,
    pub crop: Frame,
    /// Gaze-map mass inside the source component.
    pub attention_mass: f64,
    /// Gaze-mass-weighted centroid of the source component (pixel centres at
    /// integer coordinates).
    pub center: (f64, f64),
    /// Pixel count of the source component.
    pub component_area: usize,
}

impl Roi {
    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x >= self.origin.x
            && p.y >= self.origin.y
            && p.x < self.origin.x + self.size
            && p.y < self.origin.y + self.size
    }
}

/// Side needed for a square centred on `c` to cover pixels `lo..=hi`.
fn covering_side(c: f64, lo: u32, hi: u32) -> u32 {
    let reach = (c - lo as f64).max(hi as f64 - c).max(0.0);
    (2.0 * reach).ceil() as u32 + 1
}

/// One ROI per 4-connected component of `binary_attention`, largest gaze mass
/// first.
pub fn extract_rois(
    binary_attention: &Mask,
    gaze_map: &GazeMap,
    frame: &Frame,
    config: &PipelineConfig,
) -> Result<Vec<Roi>> {
    let dims = frame.dims();
    for actual in [binary_attention.dims(), gaze_map.dims()] {
        if actual != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual,
            });
        }
    }
    let max_side = dims.0.min(dims.1);
    let mut rois = Vec::new();
    for component in connected_components(binary_attention) {
        let mut mass = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        let (mut x0, mut x1, mut y0, mut y1) = (u32::MAX, 0, u32::MAX, 0);
        for p in &component {
            let w = gaze_map.map.get(p.x, p.y);
            mass += w;
            sx += w * p.x as f64;
            sy += w * p.y as f64;
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let center = if mass > 0.0 {
            (sx / mass, sy / mass)
        } else {
            let n = component.len() as f64;
            (
                component.iter().map(|p| p.x as f64).sum::<f64>() / n,
                component.iter().map(|p| p.y as f64).sum::<f64>() / n,
            )
        };
        let area_side = 2 * (component.len() as f64).sqrt().ceil() as u32;
        let cover = covering_side(center.0, x0, x1).max(covering_side(center.1, y0, y1));
        let size = config.roi_min_m.max(area_side).max(cover).min(max_side);
        let place = |c: f64, extent: u32| -> u32 {
            let start = (c - (size as f64 - 1.0) / 2.0).round().max(0.0) as u32;
            start.min(extent - size)
        };
        let origin = PixelPoint::new(place(center.0, dims.0), place(center.1, dims.1));
        rois.push(Roi {
            origin,
            size,
            crop: frame.crop(origin, size, size)?,
            attention_mass: mass,
            center,
            component_area: component.len(),
        });
    }
    rois.sort_by(|a, b| {
        b.attention_mass
            .total_cmp(&a.attention_mass)
            .then_with(|| a.origin.cmp(&b.origin))
    });
    Ok(rois)
}

/// `clamp(α·I + β·(I ⊛ G_σ) + λ, 0, 255)` per channel, with a unit-sum
/// Gaussian and replicated borders.
pub fn enhance(crop: &Frame, alpha: f64, beta: f64, lambda: f64, blur_sigma: f64) -> Result<Frame> {
    if !(blur_sigma > 0.0 && blur_sigma.is_finite()) {
        return Err(Error::invalid("blur_sigma", format!("must be positive, got {blur_sigma}")));
    }
    let (w, h) = (crop.width() as usize, crop.height() as usize);
    let taps = gaussian_kernel(blur_sigma);
    let planes = crop.channel_planes();
    let blurred: Vec<Vec<f64>> = planes
        .iter()
        .map(|p| convolve_separable(p.values(), w, h, &taps))
        .collect();
    // raw pixels are interleaved RGB
    let out = crop
        .as_raw()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let v = alpha * v as f64 + beta * blurred[k % 3][k / 3] + lambda;
            v.clamp(0.0, 255.0).round() as u8
        })
        .collect();
    Frame::new(crop.width(), crop.height(), out)
}

pub fn enhance_roi(roi: &Roi, config: &PipelineConfig) -> Result<Frame> {
    enhance(
        &roi.crop,
        config.enhance_alpha,
        config.enhance_beta,
        config.enhance_lambda,
        config.blur_sigma_for(roi.size),
    )
}
