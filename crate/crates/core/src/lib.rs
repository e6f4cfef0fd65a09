//! Vineyard row following from segmentation masks and depth.
//!
//! - [`raster`]: masks, depth, fusion and the depth-gated control map.
//! - [`spc`]: the cluster-to-velocity controller.
//! - [`simworld`]: synthetic vineyard, camera and kinematics.
//! - [`eval`]: midline ground truth, trajectory error and statistics.
//! - [`scenario`], [`replay`], [`bench`]: experiment drivers behind the CLI.
//! - [`report`]: CSV logs and SVG plots.

pub mod bench;
pub mod eval;
pub mod raster;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod simworld;
pub mod spc;
