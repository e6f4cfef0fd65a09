//! Pixel-domain state of the pipeline: binary segmentation masks, depth
//! rasters, their temporal fusion and the depth-gated control map.
//!
//! Coordinates follow the image convention: origin top-left, `row` grows
//! downward and `col` grows rightward. Every raster is stored row-major.

mod io;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    depth_file_name, load_depth, load_mask, mask_file_name, save_depth_f32, save_depth_png, save_mask, RasterBounds,
};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, found {found_w}x{found_h}")]
    DimensionMismatch { expected_w: usize, expected_h: usize, found_w: usize, found_h: usize },
    #[error("expected {expected} frames for fusion, got {found}")]
    WrongFrameCount { expected: usize, found: usize },
    #[error("frames are not consecutive: {prev} followed by {next}")]
    NonConsecutive { prev: u64, next: u64 },
    #[error("depth map has no valid cell")]
    NoValidDepth,
    #[error("invalid raster configuration: {0}")]
    InvalidConfig(String),
    #[error("cell buffer of length {len} does not fit {width}x{height}")]
    BadBuffer { width: usize, height: usize, len: usize },
    #[error("binary cell at index {index} has value {value}")]
    NonBinaryCell { index: usize, value: u8 },
    #[error("malformed raster file {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("raster {path} is {width}x{height}, outside bounds {max_width}x{max_height}")]
    OutOfBounds { path: String, width: usize, height: usize, max_width: usize, max_height: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RasterError>;

fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(RasterError::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            found_w: found.0,
            found_h: found.1,
        });
    }
    Ok(())
}

/// A row-major h×w grid of {0,1} cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(RasterError::BadBuffer { width, height, len: cells.len() });
        }
        if let Some((index, &value)) = cells.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(RasterError::NonBinaryCell { index, value });
        }
        Ok(Self { width, height, cells })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, cells: vec![0; width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self { width, height, cells: vec![1; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                cells.push(f(row, col) as u8);
            }
        }
        Self { width, height, cells }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[row * self.width + col] = value as u8;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.cells[row * self.width..(row + 1) * self.width]
    }

    pub fn popcount(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Mirror image about the vertical axis.
    pub fn flip_columns(&self) -> Self {
        let mut cells = Vec::with_capacity(self.cells.len());
        for row in self.cells.chunks_exact(self.width.max(1)) {
            cells.extend(row.iter().rev());
        }
        Self { width: self.width, height: self.height, cells }
    }
}

/// Binary segmentation output for one frame; 1 = vine, 0 = free space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    pub frame: u64,
    pub mask: BinaryMap,
}

impl SegMap {
    pub fn new(frame: u64, mask: BinaryMap) -> Self {
        Self { frame, mask }
    }
}

/// Per-pixel distances in meters. A cell equal to [`DepthMap::INVALID`] (or
/// any non-finite / negative value) carries no depth return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    cells: Vec<f32>,
}

impl DepthMap {
    pub const INVALID: f32 = 0.0;

    pub fn new(width: usize, height: usize, cells: Vec<f32>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(RasterError::BadBuffer { width, height, len: cells.len() });
        }
        Ok(Self { width, height, cells })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self { width, height, cells: vec![value; width * height] }
    }

    pub fn is_valid(value: f32) -> bool {
        value.is_finite() && value > Self::INVALID
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cells(&self) -> &[f32] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.cells[row * self.width + col] = value;
    }

    pub fn max_valid(&self) -> Option<f32> {
        self.cells
            .iter()
            .copied()
            .filter(|&d| Self::is_valid(d))
            .fold(None, |acc, d| Some(acc.map_or(d, |m: f32| m.max(d))))
    }

    pub fn scaled(&self, factor: f32) -> Self {
        let cells = self.cells.iter().map(|&d| if Self::is_valid(d) { d * factor } else { d }).collect();
        Self { width: self.width, height: self.height, cells }
    }
}

/// Per-pixel detection counts over a window of consecutive masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumSegMap {
    width: usize,
    height: usize,
    window: usize,
    cells: Vec<u8>,
}

impl CumSegMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// Binary map of the cells whose count reaches `threshold`.
    pub fn at_least(&self, threshold: u8) -> BinaryMap {
        BinaryMap {
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(|&c| (c >= threshold) as u8).collect(),
        }
    }
}

/// The controller input: 1 = obstacle, 0 = free space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtrlMap(BinaryMap);

impl CtrlMap {
    pub fn new(map: BinaryMap) -> Self {
        Self(map)
    }

    pub fn map(&self) -> &BinaryMap {
        &self.0
    }

    pub fn map_mut(&mut self) -> &mut BinaryMap {
        &mut self.0
    }

    pub fn into_inner(self) -> BinaryMap {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn flip_columns(&self) -> Self {
        Self(self.0.flip_columns())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    /// Number of consecutive masks fused per control map.
    pub s_window: usize,
    /// Fraction of the farthest valid depth kept as line of sight.
    pub l_depth: f64,
    /// Minimum fused count for a pixel to count as vine.
    pub fusion_threshold: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self { s_window: 3, l_depth: 0.5, fusion_threshold: 1 }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_window == 0 || self.s_window > u8::MAX as usize {
            return Err(RasterError::InvalidConfig(format!("s_window must be in [1, 255], got {}", self.s_window)));
        }
        if !(self.l_depth > 0.0 && self.l_depth <= 1.0) {
            return Err(RasterError::InvalidConfig(format!("l_depth must be in (0, 1], got {}", self.l_depth)));
        }
        if self.fusion_threshold == 0 || self.fusion_threshold > self.s_window {
            return Err(RasterError::InvalidConfig(format!(
                "fusion_threshold must be in [1, {}], got {}",
                self.s_window, self.fusion_threshold
            )));
        }
        Ok(())
    }
}

/// Sums `window` consecutive masks cell by cell.
pub fn fuse_segmentations(maps: &[SegMap], window: usize) -> Result<CumSegMap> {
    if maps.len() != window || window == 0 {
        return Err(RasterError::WrongFrameCount { expected: window, found: maps.len() });
    }
    let dims = maps[0].mask.dims();
    for pair in maps.windows(2) {
        check_dims(dims, pair[1].mask.dims())?;
        if pair[0].frame.checked_add(1) != Some(pair[1].frame) {
            return Err(RasterError::NonConsecutive { prev: pair[0].frame, next: pair[1].frame });
        }
    }
    let mut cells = vec![0u8; dims.0 * dims.1];
    for map in maps {
        for (acc, &v) in cells.iter_mut().zip(map.mask.cells()) {
            *acc += v;
        }
    }
    Ok(CumSegMap { width: dims.0, height: dims.1, window, cells })
}

/// Keeps only what lies closer than `l_depth` times the farthest valid return.
/// Cells without a return map to 0; a tie with the threshold maps to 0.
pub fn depth_binary_mask(depth: &DepthMap, l_depth: f64) -> Result<BinaryMap> {
    if !(l_depth > 0.0 && l_depth <= 1.0) {
        return Err(RasterError::InvalidConfig(format!("l_depth must be in (0, 1], got {l_depth}")));
    }
    let max = depth.max_valid().ok_or(RasterError::NoValidDepth)? as f64;
    let threshold = l_depth * max;
    let cells = depth.cells.iter().map(|&d| (DepthMap::is_valid(d) && (d as f64) < threshold) as u8).collect();
    Ok(BinaryMap { width: depth.width, height: depth.height, cells })
}

/// Intersects the thresholded fused counts with the depth mask.
pub fn make_ctrl_map(cum: &CumSegMap, depth_mask: &BinaryMap, fusion_threshold: usize) -> Result<CtrlMap> {
    check_dims(cum.dims(), depth_mask.dims())?;
    let threshold = fusion_threshold.min(u8::MAX as usize) as u8;
    let cells = cum.cells.iter().zip(depth_mask.cells()).map(|(&c, &m)| (c >= threshold && m == 1) as u8).collect();
    Ok(CtrlMap(BinaryMap { width: cum.width, height: cum.height, cells }))
}

/// Full preprocessing for one control step: fuse `frames`, gate with the
/// depth of the newest frame and intersect.
pub fn preprocess(frames: &[SegMap], depth: &DepthMap, config: &RasterConfig) -> Result<CtrlMap> {
    config.validate()?;
    let cum = fuse_segmentations(frames, config.s_window)?;
    check_dims(cum.dims(), depth.dims())?;
    let mask = depth_binary_mask(depth, config.l_depth)?;
    make_ctrl_map(&cum, &mask, config.fusion_threshold)
}

/// Holds the most recent `capacity` masks. Pushing a frame that does not
/// follow the newest one restarts the window.
#[derive(Debug, Clone)]
pub struct FrameWindow {
    capacity: usize,
    frames: VecDeque<SegMap>,
}

impl FrameWindow {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), frames: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, frame: SegMap) {
        if let Some(last) = self.frames.back() {
            if last.frame.checked_add(1) != Some(frame.frame) || last.mask.dims() != frame.mask.dims() {
                self.frames.clear();
            }
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The buffered frames, oldest first, once the window is full.
    pub fn frames(&mut self) -> Option<&[SegMap]> {
        if self.is_full() {
            Some(self.frames.make_contiguous())
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(frame: u64, mask: BinaryMap) -> SegMap {
        SegMap::new(frame, mask)
    }

    #[test]
    fn fuse_all_zero_is_zero() {
        let maps: Vec<_> = (0..3).map(|t| seg(t, BinaryMap::zeros(8, 8))).collect();
        let cum = fuse_segmentations(&maps, 3).unwrap();
        assert!(cum.cells().iter().all(|&c| c == 0));
        assert_eq!(cum.window(), 3);
    }

    #[test]
    fn fuse_identical_single_pixel() {
        let mut m = BinaryMap::zeros(8, 8);
        m.set(5, 5, true);
        let maps: Vec<_> = (10..13).map(|t| seg(t, m.clone())).collect();
        let cum = fuse_segmentations(&maps, 3).unwrap();
        assert_eq!(cum.get(5, 5), 3);
        assert_eq!(cum.cells().iter().map(|&c| c as usize).sum::<usize>(), 3);
    }

    #[test]
    fn fuse_rejects_bad_windows() {
        let maps: Vec<_> = (0..2).map(|t| seg(t, BinaryMap::zeros(4, 4))).collect();
        assert!(matches!(fuse_segmentations(&maps, 3), Err(RasterError::WrongFrameCount { expected: 3, found: 2 })));

        let maps = vec![seg(0, BinaryMap::zeros(4, 4)), seg(2, BinaryMap::zeros(4, 4))];
        assert!(matches!(fuse_segmentations(&maps, 2), Err(RasterError::NonConsecutive { prev: 0, next: 2 })));

        let maps = vec![seg(0, BinaryMap::zeros(4, 4)), seg(1, BinaryMap::zeros(5, 4))];
        assert!(matches!(fuse_segmentations(&maps, 2), Err(RasterError::DimensionMismatch { .. })));
    }

    #[test]
    fn depth_mask_strict_threshold() {
        let depth = DepthMap::new(4, 1, vec![4.0, 1.9, 2.5, 2.0]).unwrap();
        let mask = depth_binary_mask(&depth, 0.5).unwrap();
        assert_eq!(mask.cells(), &[0, 1, 0, 0]);
    }

    #[test]
    fn depth_mask_full_line_of_sight() {
        let depth = DepthMap::new(5, 1, vec![3.0, 1.0, DepthMap::INVALID, 3.0, 0.5]).unwrap();
        let mask = depth_binary_mask(&depth, 1.0).unwrap();
        assert_eq!(mask.cells(), &[0, 1, 0, 0, 1]);
    }

    #[test]
    fn depth_mask_needs_valid_cell() {
        let depth = DepthMap::filled(3, 3, DepthMap::INVALID);
        assert!(matches!(depth_binary_mask(&depth, 0.5), Err(RasterError::NoValidDepth)));
        let depth = DepthMap::filled(3, 3, f32::NAN);
        assert!(matches!(depth_binary_mask(&depth, 0.5), Err(RasterError::NoValidDepth)));
    }

    #[test]
    fn invalid_depth_ignored_by_max() {
        let depth = DepthMap::new(3, 1, vec![f32::INFINITY, 2.0, 0.9]).unwrap();
        let mask = depth_binary_mask(&depth, 0.5).unwrap();
        assert_eq!(mask.cells(), &[0, 0, 1]);
    }

    #[test]
    fn ctrl_map_trivial_cases() {
        let maps: Vec<_> = (0..3).map(|t| seg(t, BinaryMap::ones(6, 6))).collect();
        let cum = fuse_segmentations(&maps, 3).unwrap();
        let all = make_ctrl_map(&cum, &BinaryMap::ones(6, 6), 1).unwrap();
        assert_eq!(all.map().popcount(), 36);
        let none = make_ctrl_map(&cum, &BinaryMap::zeros(6, 6), 1).unwrap();
        assert_eq!(none.map().popcount(), 0);
        assert!(make_ctrl_map(&cum, &BinaryMap::zeros(5, 6), 1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RasterConfig::default().validate().is_ok());
        assert!(RasterConfig { l_depth: 0.0, ..Default::default() }.validate().is_err());
        assert!(RasterConfig { l_depth: 1.5, ..Default::default() }.validate().is_err());
        assert!(RasterConfig { fusion_threshold: 4, ..Default::default() }.validate().is_err());
        assert!(RasterConfig { fusion_threshold: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn binary_map_rejects_non_binary() {
        assert!(matches!(BinaryMap::new(2, 1, vec![0, 2]), Err(RasterError::NonBinaryCell { index: 1, value: 2 })));
        assert!(BinaryMap::new(2, 2, vec![0, 1]).is_err());
    }

    #[test]
    fn frame_window_keeps_latest() {
        let mut window = FrameWindow::new(3);
        for t in 0..5 {
            window.push(seg(t, BinaryMap::zeros(2, 2)));
        }
        let frames = window.frames().unwrap();
        assert_eq!(frames.iter().map(|f| f.frame).collect::<Vec<_>>(), vec![2, 3, 4]);

        window.push(seg(9, BinaryMap::zeros(2, 2)));
        assert_eq!(window.len(), 1);
        assert!(window.frames().is_none());
    }

    #[test]
    fn flip_columns_involution() {
        let m = BinaryMap::from_fn(5, 3, |r, c| (r + 2 * c) % 3 == 0);
        assert_eq!(m.flip_columns().flip_columns(), m);
        assert_eq!(m.flip_columns().get(1, 0), m.get(1, 4));
    }
}
