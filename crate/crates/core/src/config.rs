//! Pipeline configuration and the monitor-geometry sigma calibration.
//!
//! The on-disk form is a flat `key = value` TOML document whose keys are the
//! field names below. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Visual angle error, degrees.
    pub theta_deg: f64,
    /// Eye-to-screen distance, centimetres.
    #[serde(rename = "distance_R_cm")]
    pub distance_r_cm: f64,
    /// Monitor resolution `[W_p, H_p]`.
    pub monitor_px: [u32; 2],
    /// Physical monitor size `[W, H]` in centimetres.
    pub monitor_cm: [f64; 2],
    /// Gaze Gaussian standard deviation in image pixels.
    pub sigma_px: f64,
    pub gaze_binarize_quantile: f64,
    #[serde(rename = "roi_min_M")]
    pub roi_min_m: u32,
    pub enhance_alpha: f64,
    pub enhance_beta: f64,
    pub enhance_lambda: f64,
    /// Absent means `M / 30` for an ROI of side `M`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enhance_blur_sigma: Option<f64>,
    pub ft_cutoff: f64,
    pub fusion_gamma: f64,
    pub fusion_eta: f64,
    pub saliency_binarize_quantile: f64,
    #[serde(rename = "grid_N")]
    pub grid_n: u32,
    pub dkf_roundness_min: f64,
    pub mbd_max_passes: u32,
    /// Baseline region-grow luminance tolerance on a 0..1 scale.
    pub grow_tolerance: f64,
    /// Feed the enhanced crop (instead of the raw crop) to the segmenter.
    pub segment_on_enhanced: bool,
    /// Drop masks touching an ROI side that is not also a frame side.
    pub drop_crop_edge_masks: bool,
    /// Grid side for the dense-prompt ablation arm.
    #[serde(rename = "dense_grid_N")]
    pub dense_grid_n: u32,
    /// Gaze inactivity before the service recomputes a session.
    pub debounce_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            theta_deg: 1.0,
            distance_r_cm: 60.0,
            monitor_px: [1920, 1080],
            monitor_cm: [64.0, 48.0],
            sigma_px: 25.0,
            gaze_binarize_quantile: 0.85,
            roi_min_m: 128,
            enhance_alpha: 4.0,
            enhance_beta: -4.0,
            enhance_lambda: 128.0,
            enhance_blur_sigma: None,
            ft_cutoff: PI / 2.75,
            fusion_gamma: 0.5,
            fusion_eta: 0.5,
            saliency_binarize_quantile: 0.90,
            grid_n: 100,
            dkf_roundness_min: 0.8,
            mbd_max_passes: 10,
            grow_tolerance: 12.0 / 255.0,
            segment_on_enhanced: false,
            drop_crop_edge_masks: true,
            dense_grid_n: 200,
            debounce_ms: 300,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 14] = [
            ("theta_deg", self.theta_deg),
            ("distance_R_cm", self.distance_r_cm),
            ("monitor_px", self.monitor_px[0].min(self.monitor_px[1]) as f64),
            ("monitor_cm", self.monitor_cm[0].min(self.monitor_cm[1])),
            ("sigma_px", self.sigma_px),
            ("roi_min_M", self.roi_min_m as f64),
            ("enhance_alpha", self.enhance_alpha),
            ("enhance_lambda", self.enhance_lambda),
            ("enhance_blur_sigma", self.enhance_blur_sigma.unwrap_or(1.0)),
            ("ft_cutoff", self.ft_cutoff),
            ("fusion_gamma", self.fusion_gamma),
            ("fusion_eta", self.fusion_eta),
            ("dkf_roundness_min", self.dkf_roundness_min),
            ("mbd_max_passes", self.mbd_max_passes as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be strictly positive, got {v}")));
            }
        }
        if !self.enhance_beta.is_finite() {
            return Err(Error::invalid("enhance_beta", "must be finite"));
        }
        for (name, q) in [
            ("gaze_binarize_quantile", self.gaze_binarize_quantile),
            ("saliency_binarize_quantile", self.saliency_binarize_quantile),
        ] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {q}")));
            }
        }
        if self.grid_n < 2 {
            return Err(Error::invalid("grid_N", "must be at least 2"));
        }
        if self.dense_grid_n < 2 {
            return Err(Error::invalid("dense_grid_N", "must be at least 2"));
        }
        if !(self.grow_tolerance >= 0.0 && self.grow_tolerance.is_finite()) {
            return Err(Error::invalid("grow_tolerance", "must be non-negative"));
        }
        Ok(())
    }

    /// Blur sigma used by the ROI enhancement for an ROI of side `m`.
    pub fn blur_sigma_for(&self, m: u32) -> f64 {
        self.enhance_blur_sigma.unwrap_or(m as f64 / 30.0)
    }

    pub fn sigma_from_geometry(&self) -> Result<f64> {
        sigma_from_geometry(
            self.theta_deg,
            self.distance_r_cm,
            self.monitor_px,
            self.monitor_cm,
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<config>"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start].matches('\n').count() as u64 + 1);
            match unknown_key(e.message()) {
                Some(key) => Error::UnknownConfigKey(key),
                None => Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.message().to_string(),
                },
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Pixel standard deviation that covers a visual angle error of `theta_deg`
/// at viewing distance `distance_r_cm`:
/// `θ/360 · π · R · sqrt((H_p·W_p)/(H·W))`.
pub fn sigma_from_geometry(
    theta_deg: f64,
    distance_r_cm: f64,
    monitor_px: [u32; 2],
    monitor_cm: [f64; 2],
) -> Result<f64> {
    if !(theta_deg >= 0.0 && theta_deg.is_finite()) {
        return Err(Error::invalid("theta_deg", format!("got {theta_deg}")));
    }
    if !(distance_r_cm > 0.0 && distance_r_cm.is_finite()) {
        return Err(Error::invalid("distance_R_cm", format!("got {distance_r_cm}")));
    }
    if monitor_px[0] == 0 || monitor_px[1] == 0 {
        return Err(Error::invalid("monitor_px", "must be positive"));
    }
    if !(monitor_cm[0] > 0.0 && monitor_cm[1] > 0.0) {
        return Err(Error::invalid("monitor_cm", "must be positive"));
    }
    let px_area = monitor_px[0] as f64 * monitor_px[1] as f64;
    let cm_area = monitor_cm[0] * monitor_cm[1];
    Ok(theta_deg / 360.0 * PI * distance_r_cm * (px_area / cm_area).sqrt())
}
