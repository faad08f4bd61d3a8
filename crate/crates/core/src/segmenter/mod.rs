//! Promptable segmentation backends.
//!
//! [`SegmenterBackend`] is the seam where a foundation model plugs in. The
//! crate ships [`BaselineBackend`], a seeded region grower that needs no
//! model, and [`ExternalBackend`], a client for adapter processes speaking
//! the framed protocol in [`protocol`].

mod baseline;
mod external;
pub mod protocol;
pub mod rle;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_region_grow, BaselineBackend, AREA_CAP_FRACTION, MIN_AREA, STABILITY_OFFSET};
pub use external::{ExternalBackend, HttpTransport, StdioTransport, Transport};

use crate::error::{Error, Result};
use crate::prompts::PromptSet;
use crate::raster::{BBox, Frame, Mask, PixelPoint};

/// IoU above which two masks from one `segment` call are duplicates.
pub const DEDUP_IOU: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub name: String,
    pub version: String,
    pub max_prompts: usize,
}

/// A binary candidate region stored as its tight bounding box plus the
/// bitmap inside that box.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateMask {
    /// Dimensions of the raster the mask lives in.
    pub dims: (u32, u32),
    pub bbox: BBox,
    /// `bbox.w`×`bbox.h` bitmap.
    pub local: Mask,
    pub confidence: f64,
    pub source_prompt: PixelPoint,
}

impl CandidateMask {
    /// `None` when `mask` is empty.
    pub fn from_mask(mask: &Mask, confidence: f64, source_prompt: PixelPoint) -> Option<Self> {
        let bbox = mask.bbox()?;
        Some(Self {
            dims: mask.dims(),
            bbox,
            local: mask.crop(bbox),
            confidence,
            source_prompt,
        })
    }

    /// Builds a mask from pixel coordinates in a `dims` raster.
    pub fn from_pixels(
        dims: (u32, u32),
        pixels: &[PixelPoint],
        confidence: f64,
        source_prompt: PixelPoint,
    ) -> Option<Self> {
        let first = pixels.first()?;
        let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
        for p in pixels {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let bbox = BBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        };
        let mut local = Mask::new(bbox.w, bbox.h);
        for p in pixels {
            local.set(p.x - x0, p.y - y0, true);
        }
        Some(Self {
            dims,
            bbox,
            local,
            confidence,
            source_prompt,
        })
    }

    pub fn area(&self) -> usize {
        self.local.count()
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        self.bbox.contains(p) && self.local.get(p.x - self.bbox.x, p.y - self.bbox.y)
    }

    /// Set pixels in raster coordinates, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = PixelPoint> + '_ {
        self.local
            .points()
            .map(move |p| PixelPoint::new(p.x + self.bbox.x, p.y + self.bbox.y))
    }

    pub fn to_mask(&self) -> Mask {
        let mut m = Mask::new(self.dims.0, self.dims.1);
        for p in self.pixels() {
            m.set(p.x, p.y, true);
        }
        m
    }

    pub fn intersection(&self, other: &CandidateMask) -> usize {
        let Some(common) = self.bbox.intersect(&other.bbox) else {
            return 0;
        };
        let mut n = 0;
        for y in common.y..common.bottom() {
            for x in common.x..common.right() {
                if self.local.get(x - self.bbox.x, y - self.bbox.y)
                    && other.local.get(x - other.bbox.x, y - other.bbox.y)
                {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn iou(&self, other: &CandidateMask) -> f64 {
        let inter = self.intersection(other);
        if inter == 0 {
            return 0.0;
        }
        inter as f64 / (self.area() + other.area() - inter) as f64
    }

    /// Re-expresses the mask in a larger raster where this raster's origin
    /// sits at `origin`.
    pub fn translated(&self, origin: PixelPoint, dims: (u32, u32)) -> CandidateMask {
        CandidateMask {
            dims,
            bbox: BBox {
                x: self.bbox.x + origin.x,
                y: self.bbox.y + origin.y,
                ..self.bbox
            },
            local: self.local.clone(),
            confidence: self.confidence,
            source_prompt: PixelPoint::new(
                self.source_prompt.x + origin.x,
                self.source_prompt.y + origin.y,
            ),
        }
    }
}

pub trait SegmenterBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// At most one mask per prompt. `prompts` are within `image` bounds and
    /// number at most `capabilities().max_prompts`.
    fn segment_prompts(&self, image: &Frame, prompts: &[PixelPoint]) -> Result<Vec<CandidateMask>>;
}

/// Higher confidence first; ties broken by source prompt then box.
fn rank(a: &CandidateMask, b: &CandidateMask) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.source_prompt.cmp(&b.source_prompt))
        .then_with(|| (a.bbox.y, a.bbox.x).cmp(&(b.bbox.y, b.bbox.x)))
}

/// Greedy suppression: masks are visited by descending confidence and kept
/// unless they overlap a kept mask with IoU above `iou_threshold`. The
/// survivors are returned ordered by source prompt.
pub fn suppress_duplicates(mut masks: Vec<CandidateMask>, iou_threshold: f64) -> Vec<CandidateMask> {
    masks.sort_by(rank);
    let mut kept: Vec<CandidateMask> = Vec::with_capacity(masks.len());
    for m in masks {
        if kept.iter().all(|k| k.iou(&m) <= iou_threshold) {
            kept.push(m);
        }
    }
    kept.sort_by(|a, b| a.source_prompt.cmp(&b.source_prompt).then_with(|| rank(a, b)));
    kept
}

/// Runs `backend` on `prompts`, batching to the backend's limit, and removes
/// duplicates (IoU > 0.9, higher confidence wins).
pub fn segment(
    backend: &dyn SegmenterBackend,
    roi_frame: &Frame,
    prompts: &PromptSet,
) -> Result<Vec<CandidateMask>> {
    if prompts.is_empty() {
        return Ok(Vec::new());
    }
    for p in &prompts.points {
        if p.x >= roi_frame.width() || p.y >= roi_frame.height() {
            return Err(Error::OutOfBounds {
                x: p.x,
                y: p.y,
                width: roi_frame.width(),
                height: roi_frame.height(),
            });
        }
    }
    let batch = backend.capabilities().max_prompts.max(1);
    let mut masks = Vec::new();
    for chunk in prompts.points.chunks(batch) {
        masks.extend(backend.segment_prompts(roi_frame, chunk)?);
    }
    for m in &masks {
        if m.dims != roi_frame.dims() || m.area() == 0 || !m.confidence.is_finite() {
            return Err(Error::Backend(format!(
                "backend `{}` returned an invalid mask",
                backend.capabilities().name
            )));
        }
    }
    Ok(suppress_duplicates(masks, DEDUP_IOU))
}
