//! PNG encoding of frames, masks and 16-bit debug maps.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{Frame, GrayMap, Mask};

fn frame_from_dynamic(img: DynamicImage) -> Result<Frame> {
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Frame::new(w, h, rgb.into_raw())
}

pub fn decode_png_frame(bytes: &[u8]) -> Result<Frame> {
    frame_from_dynamic(image::load_from_memory(bytes)?)
}

pub fn encode_png_frame(frame: &Frame) -> Result<Vec<u8>> {
    let img = RgbImage::from_raw(frame.width(), frame.height(), frame.as_raw().to_vec())
        .expect("frame buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Any format the `image` crate decodes; alpha is dropped, gray is expanded.
pub fn read_frame(path: &Path) -> Result<Frame> {
    frame_from_dynamic(image::open(path)?)
}

pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png_frame(frame)?)?;
    Ok(())
}

/// Nonzero pixels (any channel) are set.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let gray = image::open(path)?.into_luma8();
    let (w, h) = gray.dimensions();
    Mask::from_bits(w, h, gray.into_raw().into_iter().map(|v| v > 0).collect())
}

fn mask_image(mask: &Mask) -> GrayImage {
    let (w, h) = mask.dims();
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(w, h, data).expect("mask buffer matches dimensions")
}

/// 8-bit gray PNG, 255 for set pixels.
pub fn encode_png_mask(mask: &Mask) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    mask_image(mask).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_png_mask(bytes: &[u8]) -> Result<Mask> {
    let gray = image::load_from_memory(bytes)?.into_luma8();
    let (w, h) = gray.dimensions();
    Mask::from_bits(w, h, gray.into_raw().into_iter().map(|v| v > 0).collect())
}

/// 8-bit gray PNG, 255 for set pixels.
pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, encode_png_mask(mask)?)?;
    Ok(())
}

/// 16-bit gray PNG of `map` scaled so that `[min, max]` spans `[0, 65535]`.
/// A constant map is written as zeros.
pub fn write_gray16(map: &GrayMap, path: &Path) -> Result<()> {
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    let data: Vec<u16> = map
        .values()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width(), map.height(), data).expect("map buffer matches dimensions");
    img.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn read_gray16(path: &Path) -> Result<GrayMap> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    GrayMap::new(w, h, img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    Ok(())
}
