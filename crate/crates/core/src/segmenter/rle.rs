//! Column-major run-length encoding of binary masks.
//!
//! Runs alternate 0/1 and the first run always counts zeros (it is 0 when
//! the first pixel is set). Pixels are visited column by column, top to
//! bottom within a column.

use crate::error::{Error, Result};
use crate::raster::Mask;

pub fn encode(mask: &Mask) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

pub fn decode(counts: &[u32], width: u32, height: u32) -> Result<Mask> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let expected = width as u64 * height as u64;
    if total != expected {
        return Err(Error::Protocol(format!(
            "RLE covers {total} pixels, mask has {expected}"
        )));
    }
    let mut mask = Mask::new(width, height);
    let mut pos = 0u64;
    for (k, &c) in counts.iter().enumerate() {
        if k % 2 == 1 {
            for i in pos..pos + c as u64 {
                let (x, y) = ((i / height as u64) as u32, (i % height as u64) as u32);
                mask.set(x, y, true);
            }
        }
        pos += c as u64;
    }
    Ok(mask)
}
