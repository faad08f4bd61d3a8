//! Pixel-level precision/recall, AUPR, Dice and lesion-level matching.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, PixelPoint};
use crate::segmenter::CandidateMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct confidence, thresholds descending.
    pub points: Vec<PrPoint>,
    pub aupr: f64,
}

/// Scored pixels of one or more images: `(confidence, is_ground_truth)`
/// for every pixel some prediction covers, and the ground-truth total.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredPixels {
    pub scores: Vec<(f64, bool)>,
    pub positives: usize,
}

impl ScoredPixels {
    pub fn extend(&mut self, other: ScoredPixels) {
        self.scores.extend(other.scores);
        self.positives += other.positives;
    }
}

/// Per-pixel maximum confidence over the masks covering it; `None` where no
/// mask does.
pub fn confidence_map(preds: &[CandidateMask], dims: (u32, u32)) -> Result<Vec<Option<f64>>> {
    let mut map = vec![None::<f64>; dims.0 as usize * dims.1 as usize];
    for m in preds {
        if m.dims != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: m.dims,
            });
        }
        if !m.confidence.is_finite() {
            return Err(Error::invalid("confidence", "must be finite"));
        }
        for p in m.pixels() {
            let slot = &mut map[p.y as usize * dims.0 as usize + p.x as usize];
            *slot = Some(slot.map_or(m.confidence, |c: f64| c.max(m.confidence)));
        }
    }
    Ok(map)
}

pub fn score_pixels(preds: &[CandidateMask], gt: &Mask) -> Result<ScoredPixels> {
    let map = confidence_map(preds, gt.dims())?;
    let scores = map
        .iter()
        .zip(gt.bits())
        .filter_map(|(c, &g)| c.map(|c| (c, g)))
        .collect();
    Ok(ScoredPixels {
        scores,
        positives: gt.count(),
    })
}

/// Sweeps every distinct confidence as a threshold (`confidence ≥ t` is
/// positive). AUPR sums recall increments times the precision envelope
/// (best precision at any recall at least as large).
pub fn pr_from_scores(scored: &ScoredPixels) -> Result<PrCurve> {
    if scored.positives == 0 {
        return Err(Error::UndefinedRecall);
    }
    let mut scores = scored.scores.clone();
    scores.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = scored.positives as f64;
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scores.len() {
        let t = scores[i].0;
        while i < scores.len() && scores[i].0 == t {
            if scores[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / total,
            threshold: t,
        });
    }
    Ok(PrCurve {
        aupr: aupr(&points),
        points,
    })
}

/// Step-wise AUPR of points ordered by descending threshold.
pub fn aupr(points: &[PrPoint]) -> f64 {
    let mut envelope = vec![0.0; points.len()];
    let mut best: f64 = 0.0;
    for (k, p) in points.iter().enumerate().rev() {
        best = best.max(p.precision);
        envelope[k] = best;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, e) in points.iter().zip(&envelope) {
        area += (p.recall - prev_recall) * e;
        prev_recall = p.recall;
    }
    area
}

pub fn pr_curve(preds: &[CandidateMask], gt: &Mask) -> Result<PrCurve> {
    pr_from_scores(&score_pixels(preds, gt)?)
}

/// `2|P∩G| / (|P| + |G|)`, 1 when both are empty.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    let inter = pred.intersection_count(gt)?;
    let total = pred.count() + gt.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn of(pred: &Mask, gt: &Mask) -> Result<Self> {
        let tp = pred.intersection_count(gt)? as u64;
        Ok(Self {
            tp,
            fp: pred.count() as u64 - tp,
            fn_: gt.count() as u64 - tp,
        })
    }

    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    /// 1 when nothing is predicted.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// 1 when there is no ground truth.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn dice(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LesionCounts {
    pub matched: usize,
    pub ground_truth: usize,
    pub predicted: usize,
}

impl LesionCounts {
    pub fn add(&mut self, o: &LesionCounts) {
        self.matched += o.matched;
        self.ground_truth += o.ground_truth;
        self.predicted += o.predicted;
    }

    /// 1 when there are no lesions.
    pub fn recall(&self) -> f64 {
        if self.ground_truth == 0 {
            1.0
        } else {
            self.matched as f64 / self.ground_truth as f64
        }
    }

    /// 1 when nothing is predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }
}

/// Greedy one-to-one matching by descending IoU; pairs at or above
/// `iou_min` count.
pub fn lesion_match(
    preds: &[CandidateMask],
    gt_components: &[Vec<PixelPoint>],
    dims: (u32, u32),
    iou_min: f64,
) -> LesionCounts {
    let gts: Vec<CandidateMask> = gt_components
        .iter()
        .filter_map(|c| CandidateMask::from_pixels(dims, c, 1.0, c[0]))
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let iou = p.iou(g);
            if iou >= iou_min && iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => (a.1, a.2).cmp(&(b.1, b.2)),
        o => o,
    });
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; gts.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            matched += 1;
        }
    }
    LesionCounts {
        matched,
        ground_truth: gts.len(),
        predicted: preds.len(),
    }
}
