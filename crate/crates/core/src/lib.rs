//! Gaze-guided prompt generation for promptable segmentation of small
//! fundus lesions.
//!
//! A reader's gaze trace becomes an attention map; its densest regions are
//! cropped, enhanced and scored for bottom-up saliency; salient grid points
//! prompt a segmenter; and a shape/colour/texture filter keeps the
//! candidates that look like microaneurysms.
//!
//! ```no_run
//! use std::sync::Arc;
//! use glanceseg::{BaselineBackend, GazeTrace, Pipeline, PipelineConfig, RunOptions};
//!
//! let frame = glanceseg::io::read_frame("fundus.png".as_ref())?;
//! let trace = GazeTrace::read_csv("fundus.csv".as_ref())?;
//! let pipeline = Pipeline::new(PipelineConfig::default(), Arc::new(BaselineBackend::default()))?;
//! let result = pipeline.run(&frame, &trace, &RunOptions::default())?;
//! println!("{} lesions", result.masks.len());
//! # Ok::<(), glanceseg::Error>(())
//! ```

pub mod color;
pub mod config;
pub mod dkf;
mod error;
pub mod eval;
pub mod filters;
pub mod gaze;
pub mod io;
pub mod pipeline;
pub mod prompts;
pub mod raster;
pub mod roi;
pub mod saliency;
pub mod segmenter;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use gaze::{GazeAccumulator, GazeMap, GazeSample, GazeTrace};
pub use pipeline::{Pipeline, PipelineResult, PromptSource, RunOptions};
pub use raster::{BBox, Frame, GrayMap, Mask, PixelPoint};
pub use segmenter::{BaselineBackend, CandidateMask, ExternalBackend, SegmenterBackend};
