//! File-level entry points shared by the binary and the tests.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use glanceseg::eval::{self, GazeSimParams};
use glanceseg::pipeline::{overlay, StageTimings};
use glanceseg::segmenter::rle;
use glanceseg::synth::SynthSpec;
use glanceseg::{
    io, BaselineBackend, CandidateMask, ExternalBackend, GazeTrace, Pipeline, PipelineConfig, PromptSource,
    RunOptions, SegmenterBackend,
};
use serde::{Deserialize, Serialize};

/// Time allowed for one external segmenter round trip.
pub const BACKEND_TIMEOUT: Duration = Duration::from_secs(120);

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

/// `baseline` or `external:<endpoint>`, where the endpoint is an http(s)
/// URL or `stdio:<program> [args...]`.
pub fn make_backend(spec: &str, config: &PipelineConfig) -> Result<Arc<dyn SegmenterBackend>> {
    if spec == "baseline" {
        return Ok(Arc::new(BaselineBackend::new(config.grow_tolerance)));
    }
    if let Some(endpoint) = spec.strip_prefix("external:") {
        let backend = ExternalBackend::connect(endpoint, BACKEND_TIMEOUT)
            .with_context(|| format!("connecting to segmenter at {endpoint}"))?;
        return Ok(Arc::new(backend));
    }
    bail!("unknown backend `{spec}` (expected `baseline` or `external:<endpoint>`)")
}

/// One mask as exchanged with clients: column-major RLE over the full frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub index: usize,
    pub rle_counts: Vec<u32>,
    /// `[height, width]`.
    pub size: [u32; 2],
    /// `[x, y, w, h]`.
    pub bbox: [u32; 4],
    pub score: f64,
}

impl MaskRecord {
    pub fn new(index: usize, m: &CandidateMask) -> Self {
        Self {
            index,
            rle_counts: rle::encode(&m.to_mask()),
            size: [m.dims.1, m.dims.0],
            bbox: [m.bbox.x, m.bbox.y, m.bbox.w, m.bbox.h],
            score: m.confidence,
        }
    }
}

pub fn mask_records(masks: &[CandidateMask]) -> Vec<MaskRecord> {
    masks.iter().enumerate().map(|(k, m)| MaskRecord::new(k, m)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub image: PathBuf,
    pub accepted: usize,
    pub candidates: usize,
    pub prompts: usize,
    pub rois: usize,
    pub ads_score: f64,
    pub timing: StageTimings,
}

/// Runs the pipeline on one image and writes `overlay.png`, `mask.png`,
/// `masks.json`, `dkf_report.jsonl` and `timing.json` into `out_dir`.
pub fn run_image(
    image: &Path,
    gaze: &Path,
    pipeline: &Pipeline,
    out_dir: &Path,
    debug: bool,
) -> Result<RunSummary> {
    let frame = io::read_frame(image).with_context(|| format!("reading image {}", image.display()))?;
    let trace = GazeTrace::read_csv(gaze)?;
    let opts = RunOptions {
        debug_dir: debug.then(|| out_dir.join("debug")),
        ..Default::default()
    };
    let result = pipeline.run(&frame, &trace, &opts)?;
    std::fs::create_dir_all(out_dir)?;
    io::write_frame(&overlay(&frame, &result), &out_dir.join("overlay.png"))?;
    io::write_mask(&result.mask(frame.dims()), &out_dir.join("mask.png"))?;
    std::fs::write(
        out_dir.join("masks.json"),
        serde_json::to_string_pretty(&mask_records(&result.masks))?,
    )?;
    let report = std::fs::File::create(out_dir.join("dkf_report.jsonl"))?;
    glanceseg::dkf::write_report_jsonl(&result.report, std::io::BufWriter::new(report))?;
    let summary = RunSummary {
        image: image.to_path_buf(),
        accepted: result.masks.len(),
        candidates: result.candidates.len(),
        prompts: result.prompt_count,
        rois: result.rois.len(),
        ads_score: result.ads.score,
        timing: result.timing,
    };
    std::fs::write(out_dir.join("timing.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub ablation: bool,
    pub n_sweep: Vec<u32>,
    /// Prompt every grid point of each ROI in the sweep.
    pub full_coverage: bool,
    pub repeats: usize,
}

/// Runs the requested evaluations over a dataset directory and writes the
/// reports into `out_dir`. Returns a human-readable summary.
pub fn evaluate(dataset: &Path, pipeline: &Pipeline, opts: &EvalOptions, out_dir: &Path) -> Result<String> {
    let items = eval::load_dataset(dataset)?;
    if items.is_empty() {
        bail!("{}: no usable images", dataset.display());
    }
    let mut text = String::new();
    if opts.ablation {
        let report = eval::ablation_run(&items, pipeline)?;
        eval::write_ablation(&report, out_dir)?;
        text.push_str("arm                      AUPR    Dice    lesion-R lesion-P prompts\n");
        for a in report.arms() {
            text.push_str(&format!(
                "{:24} {:.4}  {:.4}  {:.4}   {:.4}   {}\n",
                a.arm, a.aupr, a.dice, a.lesion_recall, a.lesion_precision, a.prompt_count
            ));
        }
    }
    if !opts.n_sweep.is_empty() {
        let source = if opts.full_coverage {
            PromptSource::FullCoverage
        } else {
            PromptSource::Saliency
        };
        let rows = eval::n_sweep(&items, pipeline, &opts.n_sweep, source, opts.repeats.max(1))?;
        eval::write_sweep(&rows, out_dir)?;
        text.push_str("N      mean prompts  mean ms   AUPR\n");
        for r in &rows {
            text.push_str(&format!(
                "{:<6} {:<13.1} {:<9.2} {:.4}\n",
                r.grid_n, r.mean_prompts, r.mean_ms, r.aupr
            ));
        }
    }
    Ok(text)
}

/// Writes `count` synthetic images with simulated gaze in the dataset layout.
pub fn synthesize(out_dir: &Path, count: usize, spec: &SynthSpec, gaze: &GazeSimParams) -> Result<usize> {
    let items = eval::synthetic_corpus(count, spec, gaze)?;
    eval::write_dataset(out_dir, &items)?;
    Ok(items.len())
}
