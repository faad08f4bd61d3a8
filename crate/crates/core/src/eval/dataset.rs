//! On-disk evaluation layout: `images/<id>.png`, `gaze/<id>.csv`,
//! `masks/<id>.png`.

use std::path::Path;

use rayon::prelude::*;

use super::sim::{simulate_gaze, GazeSimParams};
use crate::error::{Error, Result};
use crate::gaze::GazeTrace;
use crate::io;
use crate::raster::{Frame, Mask};
use crate::synth::{generate, SynthSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    pub frame: Frame,
    pub trace: GazeTrace,
    pub gt: Mask,
}

/// Loads every `images/*.png` with its trace and mask, ordered by id. Items
/// missing a mask or trace are skipped with a warning.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetItem>> {
    let images = dir.join("images");
    let mut ids: Vec<String> = std::fs::read_dir(&images)
        .map_err(|e| Error::Parse {
            path: images.clone(),
            line: None,
            message: e.to_string(),
        })?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension()? == "png").then(|| path.file_stem()?.to_str().map(str::to_string))?
        })
        .collect();
    ids.sort();
    let mut items = Vec::with_capacity(ids.len());
    for id in ids {
        let mask_path = dir.join("masks").join(format!("{id}.png"));
        let gaze_path = dir.join("gaze").join(format!("{id}.csv"));
        if !mask_path.exists() {
            log::warn!("{id}: no ground-truth mask at {}, skipped", mask_path.display());
            continue;
        }
        if !gaze_path.exists() {
            log::warn!("{id}: no gaze trace at {}, skipped", gaze_path.display());
            continue;
        }
        let frame = io::read_frame(&images.join(format!("{id}.png")))?;
        let gt = io::read_mask(&mask_path)?;
        if gt.dims() != frame.dims() {
            return Err(Error::DimensionMismatch {
                expected: frame.dims(),
                actual: gt.dims(),
            });
        }
        let trace = GazeTrace::read_csv(&gaze_path)?;
        items.push(DatasetItem {
            id,
            frame,
            trace,
            gt,
        });
    }
    Ok(items)
}

pub fn write_dataset(dir: &Path, items: &[DatasetItem]) -> Result<()> {
    for sub in ["images", "gaze", "masks"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    for item in items {
        io::write_frame(&item.frame, &dir.join("images").join(format!("{}.png", item.id)))?;
        io::write_mask(&item.gt, &dir.join("masks").join(format!("{}.png", item.id)))?;
        item.trace.write_csv(&dir.join("gaze").join(format!("{}.csv", item.id)))?;
    }
    Ok(())
}

/// `count` synthetic images with simulated gaze. Image `k` uses seed
/// `base.seed + k` for both the image and the gaze.
pub fn synthetic_corpus(count: usize, base: &SynthSpec, gaze: &GazeSimParams) -> Result<Vec<DatasetItem>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let seed = base.seed + k as u64;
            let spec = SynthSpec { seed, ..base.clone() };
            let img = generate(&spec)?;
            let id = format!("synth_{seed:04}");
            let params = GazeSimParams { seed, ..gaze.clone() };
            let trace = simulate_gaze(&img.gt, &img.frame, &id, &params)?;
            Ok(DatasetItem {
                id,
                frame: img.frame,
                trace,
                gt: img.gt,
            })
        })
        .collect()
}
