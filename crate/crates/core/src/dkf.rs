//! Domain-knowledge filter: a candidate survives only if it is round, redder
//! than its surroundings, and smoother than its surroundings.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::srgb_to_lab;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::raster::{connected_components, luma, BBox, Frame, Mask, PixelPoint};
use crate::segmenter::CandidateMask;

/// Radius of the background ring around a candidate.
pub const RING_RADIUS: u32 = 5;

/// IoU above which accepted masks from overlapping ROIs are merged.
pub const MERGE_IOU: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaPassed {
    pub shape: bool,
    pub color: bool,
    pub texture: bool,
}

impl CriteriaPassed {
    pub fn all(&self) -> bool {
        self.shape && self.color && self.texture
    }
}

/// Measurements behind one candidate's verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DkfRecord {
    /// Position of the candidate in the input list.
    pub candidate: usize,
    /// Candidate bounding box in frame coordinates.
    pub bbox: BBox,
    pub area: usize,
    pub confidence: f64,
    pub roundness: f64,
    pub mean_a_star: f64,
    pub background_mean_a_star: f64,
    pub smoothness: f64,
    pub background_smoothness: f64,
    /// Smoothness of the whole ROI, for comparison with the ring.
    pub roi_smoothness: f64,
    pub passed: CriteriaPassed,
    pub accepted: bool,
}

/// Clockwise neighbour offsets with y pointing down, starting east.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(from: (i64, i64), to: (i64, i64)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    DIRS.iter().position(|&o| o == d).expect("adjacent pixels")
}

/// Length of the outer 8-connected contour of the component containing the
/// first set pixel, by Moore-neighbour tracing. Straight steps count 1,
/// diagonal steps √2.
pub fn contour_length(mask: &Mask) -> Result<f64> {
    let start = mask.points().next().ok_or(Error::EmptyMask)?;
    let start = (start.x as i64, start.y as i64);
    let on = |p: (i64, i64)| mask.get_signed(p.0, p.1);
    // The west neighbour of the top-left pixel is background.
    let next = |c: (i64, i64), back: (i64, i64)| -> Option<((i64, i64), (i64, i64))> {
        let k0 = dir_index(c, back);
        let mut prev = back;
        for s in 1..=8 {
            let d = DIRS[(k0 + s) % 8];
            let q = (c.0 + d.0, c.1 + d.1);
            if on(q) {
                return Some((q, prev));
            }
            prev = q;
        }
        None
    };
    let Some((first, mut back)) = next(start, (start.0 - 1, start.1)) else {
        return Ok(0.0);
    };
    let step = |a: (i64, i64), b: (i64, i64)| {
        if a.0 != b.0 && a.1 != b.1 {
            SQRT_2
        } else {
            1.0
        }
    };
    let mut length = step(start, first);
    let mut current = first;
    loop {
        let (n, b) = next(current, back).expect("contour pixel has a neighbour");
        if current == start && n == first {
            break;
        }
        length += step(current, n);
        current = n;
        back = b;
    }
    Ok(length)
}

/// `4πS/C²` with `S` the pixel count and `C` the contour length. A single
/// pixel has roundness 1.
pub fn roundness(mask: &Mask) -> Result<f64> {
    let area = mask.count();
    if area == 0 {
        return Err(Error::EmptyMask);
    }
    if area == 1 {
        return Ok(1.0);
    }
    let c = contour_length(mask)?;
    Ok(4.0 * PI * area as f64 / (c * c))
}

/// Population standard deviation.
pub fn smoothness(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorStats {
    pub mean_a_star: f64,
    pub background_mean_a_star: f64,
    pub pass: bool,
}

/// Passes iff the mean a* over `mask` is positive and exceeds the mean a*
/// over `background`. An empty background falls back to the whole frame.
pub fn color_pass(frame: &Frame, mask: &Mask, background: &Mask) -> Result<ColorStats> {
    for actual in [mask.dims(), background.dims()] {
        if actual != frame.dims() {
            return Err(Error::DimensionMismatch {
                expected: frame.dims(),
                actual,
            });
        }
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let a_of = |p: PixelPoint| srgb_to_lab(frame.pixel(p.x, p.y))[1];
    let fg: Vec<f64> = mask.points().map(a_of).collect();
    let bg: Vec<f64> = if background.is_empty() {
        frame.pixels().map(|px| srgb_to_lab(px)[1]).collect()
    } else {
        background.points().map(a_of).collect()
    };
    let (m, b) = (mean(&fg), mean(&bg));
    Ok(ColorStats {
        mean_a_star: m,
        background_mean_a_star: b,
        pass: m > 0.0 && m > b,
    })
}

/// Pixels within `RING_RADIUS` (Euclidean) of `mask` but outside it.
pub fn background_ring(mask: &Mask) -> Mask {
    let mut ring = mask.dilate(RING_RADIUS);
    ring.subtract(mask).expect("same dims");
    ring
}

/// Window around `bbox` grown by `RING_RADIUS`, clipped to `dims`.
fn ring_window(bbox: BBox, dims: (u32, u32)) -> BBox {
    let x0 = bbox.x.saturating_sub(RING_RADIUS);
    let y0 = bbox.y.saturating_sub(RING_RADIUS);
    let x1 = (bbox.right() + RING_RADIUS).min(dims.0);
    let y1 = (bbox.bottom() + RING_RADIUS).min(dims.1);
    BBox {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    }
}

fn gray_values(frame: &Frame, points: impl Iterator<Item = PixelPoint>) -> Vec<f64> {
    points.map(|p| luma(frame.pixel(p.x, p.y))).collect()
}

/// Evaluates one candidate (in `roi_frame` coordinates).
pub fn evaluate(
    candidate: &CandidateMask,
    roi_frame: &Frame,
    roi_smoothness: f64,
    config: &PipelineConfig,
) -> Result<DkfRecord> {
    if candidate.dims != roi_frame.dims() {
        return Err(Error::DimensionMismatch {
            expected: roi_frame.dims(),
            actual: candidate.dims,
        });
    }
    // All measurements are local to a window that holds the candidate and
    // its ring.
    let window = ring_window(candidate.bbox, roi_frame.dims());
    let sub = roi_frame.crop(PixelPoint::new(window.x, window.y), window.w, window.h)?;
    let mut local = Mask::new(window.w, window.h);
    for p in candidate.pixels() {
        local.set(p.x - window.x, p.y - window.y, true);
    }
    let ring = background_ring(&local);

    let single = connected_components(&local).len() == 1;
    let round = roundness(&local)?;
    let shape = single && round >= config.dkf_roundness_min;

    let color = if ring.is_empty() {
        let mut full = Mask::new(roi_frame.width(), roi_frame.height());
        for p in candidate.pixels() {
            full.set(p.x, p.y, true);
        }
        color_pass(roi_frame, &full, &Mask::new(roi_frame.width(), roi_frame.height()))?
    } else {
        color_pass(&sub, &local, &ring)?
    };

    let smooth = smoothness(&gray_values(&sub, local.points()));
    let background_smoothness = if ring.is_empty() {
        roi_smoothness
    } else {
        smoothness(&gray_values(&sub, ring.points()))
    };
    let passed = CriteriaPassed {
        shape,
        color: color.pass,
        texture: smooth < background_smoothness,
    };
    Ok(DkfRecord {
        candidate: 0,
        bbox: candidate.bbox,
        area: candidate.area(),
        confidence: candidate.confidence,
        roundness: round,
        mean_a_star: color.mean_a_star,
        background_mean_a_star: color.background_mean_a_star,
        smoothness: smooth,
        background_smoothness,
        roi_smoothness,
        passed,
        accepted: passed.all(),
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DkfOutcome {
    /// Accepted candidates in frame coordinates.
    pub accepted: Vec<CandidateMask>,
    /// One record per input candidate, in input order.
    pub report: Vec<DkfRecord>,
}

/// Filters `candidates` (in `roi_frame` coordinates) and maps the accepted
/// ones into a `frame_dims` frame where the ROI's top-left sits at `origin`.
pub fn apply_dkf(
    candidates: &[CandidateMask],
    roi_frame: &Frame,
    origin: PixelPoint,
    frame_dims: (u32, u32),
    config: &PipelineConfig,
) -> Result<DkfOutcome> {
    if candidates.is_empty() {
        return Ok(DkfOutcome::default());
    }
    let roi_smoothness = smoothness(roi_frame.gray().values());
    let records: Vec<DkfRecord> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut r = evaluate(c, roi_frame, roi_smoothness, config)?;
            r.candidate = i;
            r.bbox.x += origin.x;
            r.bbox.y += origin.y;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let accepted = candidates
        .iter()
        .zip(&records)
        .filter(|(_, r)| r.accepted)
        .map(|(c, _)| c.translated(origin, frame_dims))
        .collect();
    Ok(DkfOutcome {
        accepted,
        report: records,
    })
}

/// Merges masks from overlapping ROIs: masks overlapping a higher-confidence
/// mask with IoU above `MERGE_IOU` are dropped.
pub fn merge_duplicates(masks: Vec<CandidateMask>) -> Vec<CandidateMask> {
    crate::segmenter::suppress_duplicates(masks, MERGE_IOU)
}

/// One JSON object per line.
pub fn write_report_jsonl(records: &[DkfRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
