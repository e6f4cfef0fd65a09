//! Ground truth and metrics: the lane midline, trajectory error against it,
//! and per-orientation controller statistics.

mod midline;
mod stats;

use nalgebra::Point2;
use serde::Serialize;
use thiserror::Error;

use crate::simworld::{EpisodeLog, Outcome};

pub use midline::{compute_midline, Cubic, Midline, MidlineCurve, MidlineSampler};
pub use stats::{mean_std, orientation_stats, ClassStats, ControlSample, MeanStd, OrientationClass, RunningStats};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("episode log has no poses")]
    EmptyLog,
    #[error("class '{0}' has no successful control iterations")]
    EmptyClass(String),
}

/// Mean distance of `points` from the midline.
pub fn path_mae(points: impl IntoIterator<Item = Point2<f64>>, midline: &Midline) -> Result<f64, EvalError> {
    let sampler = midline.sampler();
    let mut acc = RunningStats::default();
    for p in points {
        acc.push(sampler.distance(p));
    }
    let summary = acc.finish();
    if summary.n == 0 {
        return Err(EvalError::EmptyLog);
    }
    Ok(summary.mean)
}

/// Mean absolute lateral deviation of the logged poses from the midline.
pub fn trajectory_mae(log: &EpisodeLog, midline: &Midline) -> Result<f64, EvalError> {
    path_mae(log.records.iter().map(|r| r.pose.position()), midline)
}

impl From<&crate::simworld::StepRecord> for ControlSample {
    fn from(r: &crate::simworld::StepRecord) -> Self {
        ControlSample { x_c: r.x_c, raw: r.raw, published: r.published, fault: r.fault }
    }
}

/// Summary of one closed-loop episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub mae: f64,
    pub fault_rate: f64,
    pub collision: bool,
    pub outcome: Outcome,
    pub steps: usize,
    pub control_steps: usize,
    pub faults: usize,
    /// Largest midline fit residual, m.
    pub midline_residual: f64,
}

pub fn episode_metrics(log: &EpisodeLog, midline: &Midline) -> Result<EpisodeMetrics, EvalError> {
    Ok(EpisodeMetrics {
        mae: trajectory_mae(log, midline)?,
        fault_rate: log.fault_rate(),
        collision: log.collided(),
        outcome: log.outcome,
        steps: log.records.len(),
        control_steps: log.control_steps(),
        faults: log.fault_count(),
        midline_residual: midline.max_residual,
    })
}
