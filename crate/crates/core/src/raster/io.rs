//! Raster files for offline replay.
//!
//! Masks are 8-bit grayscale PNGs holding 0 (free) or 255 (vine), with the
//! frame index as the last digit run of the file name. Depth is either a
//! 16-bit grayscale PNG in millimeters (0 = no return) or a raw little-endian
//! f32 raster behind an 8-byte `width, height` (u32, u32) header.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};

use super::{BinaryMap, DepthMap, RasterError, Result, SegMap};

const MASK_ON: u8 = 255;
const RAW_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterBounds {
    pub max_width: usize,
    pub max_height: usize,
}

impl Default for RasterBounds {
    fn default() -> Self {
        Self { max_width: 4096, max_height: 4096 }
    }
}

impl RasterBounds {
    fn check(&self, path: &Path, width: usize, height: usize) -> Result<()> {
        if width == 0 || height == 0 || width > self.max_width || height > self.max_height {
            return Err(RasterError::OutOfBounds {
                path: path.display().to_string(),
                width,
                height,
                max_width: self.max_width,
                max_height: self.max_height,
            });
        }
        Ok(())
    }
}

pub fn mask_file_name(frame: u64) -> String {
    format!("mask_{frame:06}.png")
}

pub fn depth_file_name(frame: u64) -> String {
    format!("depth_{frame:06}.png")
}

fn malformed(path: &Path, reason: impl Into<String>) -> RasterError {
    RasterError::Malformed { path: path.display().to_string(), reason: reason.into() }
}

fn frame_index_from_name(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| malformed(path, e.to_string()))
}

pub fn load_mask(path: impl AsRef<Path>, bounds: &RasterBounds) -> Result<SegMap> {
    let path = path.as_ref();
    let frame = frame_index_from_name(path).ok_or_else(|| malformed(path, "file name carries no frame index"))?;
    let img = match decode(path)? {
        DynamicImage::ImageLuma8(img) => img,
        other => return Err(malformed(path, format!("expected 8-bit grayscale, found {:?}", other.color()))),
    };
    let (width, height) = (img.width() as usize, img.height() as usize);
    bounds.check(path, width, height)?;
    let mut cells = Vec::with_capacity(width * height);
    for (i, &v) in img.as_raw().iter().enumerate() {
        match v {
            0 => cells.push(0),
            MASK_ON => cells.push(1),
            _ => return Err(malformed(path, format!("pixel {i} has value {v}, expected 0 or 255"))),
        }
    }
    Ok(SegMap::new(frame, BinaryMap::new(width, height, cells)?))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMap) -> Result<()> {
    let path = path.as_ref();
    let pixels = mask.cells().iter().map(|&c| c * MASK_ON).collect();
    let img: GrayImage = ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, pixels)
        .ok_or_else(|| malformed(path, "buffer does not fit dimensions"))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| malformed(path, e.to_string()))
}

pub fn load_depth(path: impl AsRef<Path>, bounds: &RasterBounds) -> Result<DepthMap> {
    let path = path.as_ref();
    let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        load_depth_png(path, bounds)
    } else {
        load_depth_f32(path, bounds)
    }
}

fn load_depth_png(path: &Path, bounds: &RasterBounds) -> Result<DepthMap> {
    let img = match decode(path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => return Err(malformed(path, format!("expected 16-bit grayscale, found {:?}", other.color()))),
    };
    let (width, height) = (img.width() as usize, img.height() as usize);
    bounds.check(path, width, height)?;
    let cells = img.as_raw().iter().map(|&mm| if mm == 0 { DepthMap::INVALID } else { mm as f32 / 1000.0 }).collect();
    DepthMap::new(width, height, cells)
}

fn load_depth_f32(path: &Path, bounds: &RasterBounds) -> Result<DepthMap> {
    let bytes = fs::read(path)?;
    if bytes.len() < RAW_HEADER_LEN {
        return Err(malformed(path, "shorter than the 8-byte header"));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    bounds.check(path, width, height)?;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != width * height * 4 {
        return Err(malformed(
            path,
            format!("{width}x{height} needs {} data bytes, found {}", width * height * 4, body.len()),
        ));
    }
    let cells = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    DepthMap::new(width, height, cells)
}

/// Writes millimeter-quantized depth; invalid cells become 0.
pub fn save_depth_png(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    let mut pixels = Vec::with_capacity(depth.cells().len());
    for &d in depth.cells() {
        if !DepthMap::is_valid(d) {
            pixels.push(0u16);
            continue;
        }
        let mm = (d as f64 * 1000.0).round();
        if !(1.0..=u16::MAX as f64).contains(&mm) {
            return Err(malformed(path, format!("depth {d} m is not representable in 16-bit millimeters")));
        }
        pixels.push(mm as u16);
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, pixels)
            .ok_or_else(|| malformed(path, "buffer does not fit dimensions"))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| malformed(path, e.to_string()))
}

pub fn save_depth_f32(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(RAW_HEADER_LEN + depth.cells().len() * 4);
    bytes.extend_from_slice(&(depth.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(depth.height() as u32).to_le_bytes());
    for &d in depth.cells() {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}
