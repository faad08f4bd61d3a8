//! Prompt points: the salient subset of a uniform `N`×`N` grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, PixelPoint};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    /// Unique, row-major, in ROI coordinates.
    pub points: Vec<PixelPoint>,
    pub grid_n: u32,
    pub source_dims: (u32, u32),
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pixel containing the centre of cell `i` when `extent` pixels are split
/// into `n` cells.
#[inline]
fn cell_center(i: u32, n: u32, extent: u32) -> u32 {
    let c = ((i as f64 + 0.5) * extent as f64 / n as f64).floor() as u32;
    c.min(extent - 1)
}

/// Cell centres of an `n`×`n` grid over a `width`×`height` raster,
/// deduplicated and row-major.
pub fn make_grid(dims: (u32, u32), n: u32) -> Result<Vec<PixelPoint>> {
    if n < 2 {
        return Err(Error::invalid("grid_N", format!("must be at least 2, got {n}")));
    }
    let (w, h) = dims;
    if w == 0 || h == 0 {
        return Err(Error::invalid("dims", "must be positive"));
    }
    let mut xs: Vec<u32> = (0..n).map(|i| cell_center(i, n, w)).collect();
    let mut ys: Vec<u32> = (0..n).map(|j| cell_center(j, n, h)).collect();
    // centres are monotone, so dedup of each axis dedups the product
    xs.dedup();
    ys.dedup();
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| PixelPoint::new(x, y)))
        .collect())
}

/// `grid ∩ salient`, where `salient` is the binarised saliency map.
pub fn intersect(grid: &[PixelPoint], salient: &Mask, grid_n: u32) -> PromptSet {
    let mut points: Vec<PixelPoint> = grid
        .iter()
        .copied()
        .filter(|p| p.x < salient.width() && p.y < salient.height() && salient.get(p.x, p.y))
        .collect();
    points.sort_unstable();
    points.dedup();
    PromptSet {
        points,
        grid_n,
        source_dims: salient.dims(),
    }
}

/// Grid and intersection in one step.
pub fn generate_prompts(salient: &Mask, n: u32) -> Result<PromptSet> {
    let grid = make_grid(salient.dims(), n)?;
    Ok(intersect(&grid, salient, n))
}
