//! Deterministic vineyard simulator: row geometry, unicycle kinematics and
//! a ray-cast RGB-D stand-in whose segmentation output is geometric truth.

mod episode;
mod kinematics;
mod render;
mod world;

use thiserror::Error;

pub use episode::{run_episode, EpisodeConfig, EpisodeLog, Outcome, StepRecord};
pub use kinematics::{normalize_angle, step_kinematics, KinematicParams, Pose2D};
pub use render::{apply_flip_noise, render_views, CameraModel};
pub use world::{generate_world, CurveDirection, Layout, Plant, VineRow, World, WorldParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("pipeline failure: {0}")]
    Pipeline(String),
}
