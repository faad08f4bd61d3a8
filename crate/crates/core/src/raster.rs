//! Raster and geometry primitives shared by every pipeline stage.
//!
//! Colour images are 8-bit RGB ([`Frame`]); everything computed from them is
//! kept as `f64` ([`GrayMap`]) until it is written back out. Binary rasters are
//! [`Mask`]es.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel coordinate. Orders row-major (`y` first, then `x`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

impl PixelPoint {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl Ord for PixelPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for PixelPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Axis-aligned box, `x`/`y` inclusive origin, `w`/`h` extents in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x >= self.x && p.x < self.right() && p.y >= self.y && p.y < self.bottom()
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x0 < x1 && y0 < y1).then(|| BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }
}

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame", "width and height must be positive"));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(
                "frame",
                format!("pixel buffer has {} bytes, expected {expected}", pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Copies the `w`×`h` window whose top-left corner is `origin`.
    pub fn crop(&self, origin: PixelPoint, w: u32, h: u32) -> Result<Frame> {
        if w == 0 || h == 0 || origin.x + w > self.width || origin.y + h > self.height {
            return Err(Error::invalid(
                "crop",
                format!(
                    "window {w}x{h} at ({}, {}) exceeds {}x{} frame",
                    origin.x, origin.y, self.width, self.height
                ),
            ));
        }
        let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
        for y in origin.y..origin.y + h {
            let start = self.offset(origin.x, y);
            pixels.extend_from_slice(&self.pixels[start..start + w as usize * 3]);
        }
        Frame::new(w, h, pixels)
    }

    /// One `f64` plane per channel, values in 0..=255.
    pub fn channel_planes(&self) -> [GrayMap; 3] {
        let n = self.width as usize * self.height as usize;
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, px) in self.pixels().enumerate() {
            for c in 0..3 {
                planes[c][i] = px[c] as f64;
            }
        }
        planes.map(|values| GrayMap {
            width: self.width,
            height: self.height,
            values,
        })
    }

    /// Rec. 601 luma on the gamma-encoded values, scale 0..=255.
    pub fn gray(&self) -> GrayMap {
        let values = self.pixels().map(luma).collect();
        GrayMap {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

#[inline]
pub fn luma(px: [u8; 3]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

/// Row-major `f64` raster. All values are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl GrayMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("gray map", "width and height must be positive"));
        }
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "gray map",
                format!("{} values for a {width}x{height} raster", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("gray map", format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-crate kernels that keep values finite.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GrayMap> {
        GrayMap::new(self.width, self.height, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> GrayMap {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            values.extend(self.values[y * w..(y + 1) * w].iter().rev());
        }
        GrayMap {
            width: self.width,
            height: self.height,
            values,
        }
    }

    /// Vertical mirror.
    pub fn flip_vertical(&self) -> GrayMap {
        let w = self.width as usize;
        let values = self
            .values
            .chunks_exact(w)
            .rev()
            .flatten()
            .copied()
            .collect();
        GrayMap {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

/// Binary raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "mask",
                format!("{} bits for a {width}x{height} raster", bits.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_points(width: u32, height: u32, points: &[PixelPoint]) -> Self {
        let mut mask = Self::new(width, height);
        for &p in points {
            mask.set(p.x, p.y, true);
        }
        mask
    }

    /// Pixels strictly above `threshold` are set.
    pub fn from_gray(map: &GrayMap, threshold: f64) -> Self {
        Self {
            width: map.width,
            height: map.height,
            bits: map.values.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Bounds-checked read; out-of-raster coordinates read as unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels in row-major order.
    pub fn points(&self) -> impl Iterator<Item = PixelPoint> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| PixelPoint::new((i % w) as u32, (i / w) as u32))
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.points();
        let first = it.next()?;
        let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
        for p in it {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        Some(BBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        })
    }

    fn check_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn union_with(&mut self, other: &Mask) -> Result<()> {
        self.check_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn subtract(&mut self, other: &Mask) -> Result<()> {
        self.check_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
        Ok(())
    }

    pub fn iou(&self, other: &Mask) -> Result<f64> {
        let inter = self.intersection_count(other)?;
        let union = self.count() + other.count() - inter;
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Dilation by a Euclidean disk of the given radius.
    pub fn dilate(&self, radius: u32) -> Mask {
        let r = radius as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let mut out = Mask::new(self.width, self.height);
        for p in self.points() {
            for &(dx, dy) in &offsets {
                let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
                if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
                    out.set(x as u32, y as u32, true);
                }
            }
        }
        out
    }

    /// Copies the window `bbox` into a new mask of the window's size.
    pub fn crop(&self, bbox: BBox) -> Mask {
        let mut out = Mask::new(bbox.w, bbox.h);
        for y in 0..bbox.h {
            for x in 0..bbox.w {
                out.set(x, y, self.get(bbox.x + x, bbox.y + y));
            }
        }
        out
    }

    pub fn to_gray(&self) -> GrayMap {
        GrayMap {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Mask {
        let w = self.width as usize;
        let bits = self
            .bits
            .chunks_exact(w)
            .flat_map(|row| row.iter().rev().copied())
            .collect();
        Mask {
            width: self.width,
            height: self.height,
            bits,
        }
    }
}

/// 4-connected components of `mask`, each a row-major pixel list, ordered by
/// their first pixel in row-major order.
pub fn connected_components(mask: &Mask) -> Vec<Vec<PixelPoint>> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push(PixelPoint::new(x as u32, y as u32));
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        pixels.sort_unstable();
        components.push(pixels);
    }
    components
}
