//! End-to-end pass: gaze map → ROIs → saliency → prompts → segmentation →
//! domain-knowledge filter.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dkf::{self, DkfRecord};
use crate::error::Result;
use crate::gaze::{ads, binarize_gaze, build_gaze_map, AdsResult, GazeMap, GazeTrace};
use crate::io;
use crate::prompts::{generate_prompts, make_grid, PromptSet};
use crate::raster::{Frame, Mask, PixelPoint};
use crate::roi::{enhance_roi, extract_rois, Roi};
use crate::saliency::{binarize_saliency, fuse, ft_saliency, mbd_saliency};
use crate::segmenter::{segment, CandidateMask, SegmenterBackend};

/// Where prompts come from inside each ROI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    /// Grid points on the binarised fused saliency map.
    #[default]
    Saliency,
    /// Every grid point (saliency treated as covering the whole ROI).
    FullCoverage,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub prompts: PromptSource,
    /// Override of `config.grid_N`.
    pub grid_n: Option<u32>,
    /// Dump intermediate maps as 16-bit PNGs here.
    pub debug_dir: Option<PathBuf>,
}

/// Wall-clock milliseconds per stage. ROI stages are summed over ROIs, so
/// with parallel ROIs they may exceed `total_ms`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub gaze_ms: f64,
    pub roi_ms: f64,
    pub saliency_ms: f64,
    pub prompts_ms: f64,
    pub segment_ms: f64,
    pub dkf_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn add(&mut self, other: &StageTimings) {
        self.gaze_ms += other.gaze_ms;
        self.roi_ms += other.roi_ms;
        self.saliency_ms += other.saliency_ms;
        self.prompts_ms += other.prompts_ms;
        self.segment_ms += other.segment_ms;
        self.dkf_ms += other.dkf_ms;
        self.total_ms += other.total_ms;
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiSummary {
    pub origin: PixelPoint,
    pub size: u32,
    pub attention_mass: f64,
    pub prompt_count: usize,
    pub candidate_count: usize,
    pub accepted_count: usize,
    pub saliency_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    /// Accepted masks in frame coordinates, cross-ROI duplicates merged.
    pub masks: Vec<CandidateMask>,
    /// Every segmenter mask before filtering, frame coordinates, merged the
    /// same way.
    pub candidates: Vec<CandidateMask>,
    /// One record per candidate per ROI, ROIs in order.
    pub report: Vec<DkfRecord>,
    pub rois: Vec<RoiSummary>,
    pub prompt_count: usize,
    pub ads: AdsResult,
    pub timing: StageTimings,
}

impl PipelineResult {
    /// Union of the accepted masks.
    pub fn mask(&self, dims: (u32, u32)) -> Mask {
        union(&self.masks, dims)
    }
}

pub fn union(masks: &[CandidateMask], dims: (u32, u32)) -> Mask {
    let mut m = Mask::new(dims.0, dims.1);
    for c in masks {
        for p in c.pixels() {
            m.set(p.x, p.y, true);
        }
    }
    m
}

struct RoiOutput {
    summary: RoiSummary,
    candidates: Vec<CandidateMask>,
    accepted: Vec<CandidateMask>,
    report: Vec<DkfRecord>,
    timing: StageTimings,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    backend: Arc<dyn SegmenterBackend>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, backend: Arc<dyn SegmenterBackend>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, backend })
    }

    pub fn backend(&self) -> &dyn SegmenterBackend {
        self.backend.as_ref()
    }

    pub fn run(&self, frame: &Frame, trace: &GazeTrace, opts: &RunOptions) -> Result<PipelineResult> {
        let t0 = Instant::now();
        let gaze = build_gaze_map(trace, frame.dims(), self.config.sigma_px)?;
        let gaze_ms = ms(t0.elapsed());
        let mut result = self.run_with_gaze_map(frame, &gaze, opts)?;
        result.timing.gaze_ms = gaze_ms;
        result.timing.total_ms += gaze_ms;
        Ok(result)
    }

    /// Runs everything after the gaze map. Used directly by callers that
    /// accumulate the map incrementally.
    pub fn run_with_gaze_map(
        &self,
        frame: &Frame,
        gaze: &GazeMap,
        opts: &RunOptions,
    ) -> Result<PipelineResult> {
        let start = Instant::now();
        let dims = frame.dims();
        let ads = ads(gaze)?;
        let t = Instant::now();
        let attention = binarize_gaze(gaze, self.config.gaze_binarize_quantile)?;
        let rois = extract_rois(&attention, gaze, frame, &self.config)?;
        let roi_ms = ms(t.elapsed());
        if let Some(dir) = &opts.debug_dir {
            std::fs::create_dir_all(dir)?;
            io::write_gray16(&gaze.map, &dir.join("gaze_map.png"))?;
            io::write_mask(&attention, &dir.join("gaze_binary.png"))?;
        }

        let outputs: Vec<RoiOutput> = rois
            .par_iter()
            .enumerate()
            .map(|(k, roi)| self.process_roi(k, roi, dims, opts))
            .collect::<Result<_>>()?;

        let mut timing = StageTimings {
            roi_ms,
            ..Default::default()
        };
        let mut candidates = Vec::new();
        let mut accepted = Vec::new();
        let mut report = Vec::new();
        let mut summaries = Vec::with_capacity(outputs.len());
        let mut prompt_count = 0;
        for out in outputs {
            timing.add(&out.timing);
            prompt_count += out.summary.prompt_count;
            candidates.extend(out.candidates);
            accepted.extend(out.accepted);
            report.extend(out.report);
            summaries.push(out.summary);
        }
        let t = Instant::now();
        let masks = dkf::merge_duplicates(accepted);
        let candidates = dkf::merge_duplicates(candidates);
        timing.dkf_ms += ms(t.elapsed());
        timing.total_ms = ms(start.elapsed());
        Ok(PipelineResult {
            masks,
            candidates,
            report,
            rois: summaries,
            prompt_count,
            ads,
            timing,
        })
    }

    fn process_roi(
        &self,
        k: usize,
        roi: &Roi,
        frame_dims: (u32, u32),
        opts: &RunOptions,
    ) -> Result<RoiOutput> {
        let cfg = &self.config;
        let grid_n = opts.grid_n.unwrap_or(cfg.grid_n);
        let mut timing = StageTimings::default();

        let t = Instant::now();
        let enhanced = enhance_roi(roi, cfg)?;
        timing.roi_ms += ms(t.elapsed());

        let t = Instant::now();
        let (salient, degenerate) = match opts.prompts {
            PromptSource::Saliency => {
                let ft = ft_saliency(&enhanced)?;
                let mbd = mbd_saliency(&enhanced, cfg.mbd_max_passes)?;
                let fused = fuse(&ft, &mbd, cfg.fusion_gamma, cfg.fusion_eta)?;
                let (mask, _) = binarize_saliency(&fused, cfg.saliency_binarize_quantile)?;
                if let Some(dir) = &opts.debug_dir {
                    dump_roi(dir, k, &ft.map, &mbd.map, &fused.map, &mask)?;
                }
                (mask, fused.degenerate)
            }
            PromptSource::FullCoverage => {
                let bits = vec![true; (roi.size * roi.size) as usize];
                (Mask::from_bits(roi.size, roi.size, bits)?, false)
            }
        };
        timing.saliency_ms += ms(t.elapsed());

        let t = Instant::now();
        let prompts = generate_prompts(&salient, grid_n)?;
        timing.prompts_ms += ms(t.elapsed());

        let t = Instant::now();
        let seg_frame = if cfg.segment_on_enhanced { &enhanced } else { &roi.crop };
        let mut local = segment(self.backend.as_ref(), seg_frame, &prompts)?;
        if cfg.drop_crop_edge_masks {
            local.retain(|m| !touches_crop_edge(m, roi, frame_dims));
        }
        timing.segment_ms += ms(t.elapsed());

        let t = Instant::now();
        let outcome = dkf::apply_dkf(&local, &roi.crop, roi.origin, frame_dims, cfg)?;
        timing.dkf_ms += ms(t.elapsed());

        Ok(RoiOutput {
            summary: RoiSummary {
                origin: roi.origin,
                size: roi.size,
                attention_mass: roi.attention_mass,
                prompt_count: prompts.len(),
                candidate_count: local.len(),
                accepted_count: outcome.accepted.len(),
                saliency_degenerate: degenerate,
            },
            candidates: local.iter().map(|c| c.translated(roi.origin, frame_dims)).collect(),
            accepted: outcome.accepted,
            report: outcome.report,
            timing,
        })
    }

    /// Gaze-free baseline: an `n`×`n` grid over the whole frame, no saliency,
    /// no filtering.
    pub fn run_dense(&self, frame: &Frame, n: u32) -> Result<(Vec<CandidateMask>, usize, StageTimings)> {
        let start = Instant::now();
        let t = Instant::now();
        let points = make_grid(frame.dims(), n)?;
        let prompts = PromptSet {
            points,
            grid_n: n,
            source_dims: frame.dims(),
        };
        let prompts_ms = ms(t.elapsed());
        let t = Instant::now();
        let masks = segment(self.backend.as_ref(), frame, &prompts)?;
        let segment_ms = ms(t.elapsed());
        let masks = dkf::merge_duplicates(masks);
        let timing = StageTimings {
            prompts_ms,
            segment_ms,
            total_ms: ms(start.elapsed()),
            ..Default::default()
        };
        Ok((masks, prompts.len(), timing))
    }
}

/// True when `m` (ROI coordinates) reaches an ROI side lying inside the
/// frame, where the crop may have cut it.
fn touches_crop_edge(m: &CandidateMask, roi: &Roi, frame_dims: (u32, u32)) -> bool {
    let (b, o) = (m.bbox, roi.origin);
    (b.x == 0 && o.x > 0)
        || (b.y == 0 && o.y > 0)
        || (b.right() == roi.size && o.x + roi.size < frame_dims.0)
        || (b.bottom() == roi.size && o.y + roi.size < frame_dims.1)
}

fn dump_roi(
    dir: &Path,
    k: usize,
    ft: &crate::raster::GrayMap,
    mbd: &crate::raster::GrayMap,
    fused: &crate::raster::GrayMap,
    salient: &Mask,
) -> Result<()> {
    io::write_gray16(ft, &dir.join(format!("roi{k:02}_ft.png")))?;
    io::write_gray16(mbd, &dir.join(format!("roi{k:02}_mbd.png")))?;
    io::write_gray16(fused, &dir.join(format!("roi{k:02}_fused.png")))?;
    io::write_mask(salient, &dir.join(format!("roi{k:02}_salient.png")))
}

/// Frame with accepted masks tinted green and rejected candidates outlined
/// in blue.
pub fn overlay(frame: &Frame, result: &PipelineResult) -> Frame {
    let dims = frame.dims();
    let accepted = result.mask(dims);
    let all = union(&result.candidates, dims);
    let mut out = frame.clone();
    for y in 0..dims.1 {
        for x in 0..dims.0 {
            if accepted.get(x, y) {
                let [r, g, b] = frame.pixel(x, y);
                out.set_pixel(x, y, [r / 2, ((g as u16 + 255) / 2) as u8, b / 2]);
            } else if all.get(x, y) {
                let edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|&(dx, dy)| !all.get_signed(x as i64 + dx, y as i64 + dy));
                if edge {
                    out.set_pixel(x, y, [40, 90, 255]);
                }
            }
        }
    }
    out
}
