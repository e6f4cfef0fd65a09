//! Segmentation-to-proportional-control: turns a binary control map into
//! linear and angular velocity commands.
//!
//! Per frame the controller clears sparse (grass) rows, counts obstacle
//! pixels per column, finds runs of free columns, picks one run using the
//! previous pick as memory, and maps the run's center offset to velocities
//! through a quadratic law followed by exponential smoothing.
//!
//! [`spc_step`] is the bare algorithm: a frame with no usable corridor is a
//! fault and yields nothing. [`Controller`] wraps it for an actuator that
//! needs a command every period, re-publishing the last smoothed command
//! during faults and stopping after a run of consecutive faults.

mod cluster;
mod control;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::CtrlMap;

pub use cluster::{
    column_histogram, find_zero_clusters, noise_reduction, row_profile, select_cluster, ColumnProfile, RowProfile,
    ZeroCluster,
};
pub use control::{control_function, ema_update, fault_rate, VelocityCommand};

#[derive(Debug, Error, PartialEq)]
pub enum SpcError {
    #[error("control map is {found_w}x{found_h}, controller runs at {expected_w}x{expected_h}")]
    DimensionMismatch { expected_w: usize, expected_h: usize, found_w: usize, found_h: usize },
    #[error("fault rate is undefined before the first step")]
    NoSteps,
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpcConfig {
    /// m/s
    pub v_max: f64,
    /// rad/s
    pub omega_max: f64,
    pub alpha_ema: f64,
    /// Rows below this fraction of the busiest row are treated as grass.
    pub noise_frac: f64,
    /// Shortest usable corridor in columns; `None` means 5% of the width.
    pub min_cluster_len: Option<usize>,
    /// How far (columns) the previous pick may sit outside a corridor and
    /// still claim it; `None` means 10% of the width.
    pub pcc_near_tol: Option<usize>,
    /// Consecutive faults after which a zero command is published.
    pub fault_timeout: u32,
}

impl Default for SpcConfig {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 1.0,
            alpha_ema: 0.1,
            noise_frac: 0.03,
            min_cluster_len: None,
            pcc_near_tol: None,
            fault_timeout: 10,
        }
    }
}

impl SpcConfig {
    pub fn min_cluster_len_for(&self, width: usize) -> usize {
        self.min_cluster_len.unwrap_or_else(|| (width * 5).div_ceil(100))
    }

    pub fn pcc_near_tol_for(&self, width: usize) -> usize {
        self.pcc_near_tol.unwrap_or_else(|| width.div_ceil(10))
    }

    pub fn validate(&self) -> Result<(), SpcError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SpcError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("v_max", self.v_max)?;
        positive("omega_max", self.omega_max)?;
        positive("alpha_ema", self.alpha_ema)?;
        positive("noise_frac", self.noise_frac)?;
        if self.alpha_ema > 1.0 {
            return Err(SpcError::InvalidConfig(format!("alpha_ema must be <= 1, got {}", self.alpha_ema)));
        }
        if self.min_cluster_len == Some(0) || self.pcc_near_tol == Some(0) {
            return Err(SpcError::InvalidConfig("cluster lengths and tolerances must be positive".into()));
        }
        if self.fault_timeout == 0 {
            return Err(SpcError::InvalidConfig("fault_timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Memory carried between control iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Abscissa of the last selected corridor.
    pub previous_cluster_center: Option<f64>,
    pub ema: VelocityCommand,
    /// True until the first command is produced.
    pub initial: bool,
    pub fault_count: u64,
    pub step_count: u64,
    pub consecutive_faults: u32,
    /// Frame size locked in by the first map.
    pub dims: Option<(usize, usize)>,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            previous_cluster_center: None,
            ema: VelocityCommand::ZERO,
            initial: true,
            fault_count: 0,
            step_count: 0,
            consecutive_faults: 0,
            dims: None,
        }
    }
}

/// What a successful control iteration computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpcOutput {
    pub cluster: ZeroCluster,
    /// Steering abscissa, columns.
    pub x_c: f64,
    /// Offset of `x_c` from the frame center, columns.
    pub d: f64,
    pub raw: VelocityCommand,
    pub smoothed: VelocityCommand,
}

/// One control iteration. Returns `Ok(None)` on a fault, in which case only
/// the fault and step counters change.
pub fn spc_step(map: &CtrlMap, state: &mut ControllerState, config: &SpcConfig) -> Result<Option<SpcOutput>, SpcError> {
    let dims = (map.width(), map.height());
    match state.dims {
        Some(expected) if expected != dims => {
            return Err(SpcError::DimensionMismatch {
                expected_w: expected.0,
                expected_h: expected.1,
                found_w: dims.0,
                found_h: dims.1,
            })
        }
        Some(_) => {}
        None => state.dims = Some(dims),
    }
    let width = dims.0;
    state.step_count += 1;

    let cleaned = noise_reduction(map, config.noise_frac);
    let profile = column_histogram(&cleaned);
    let clusters = find_zero_clusters(&profile, config.min_cluster_len_for(width));
    let Some(cluster) = select_cluster(&clusters, state, width, config.pcc_near_tol_for(width)) else {
        state.fault_count += 1;
        state.consecutive_faults = state.consecutive_faults.saturating_add(1);
        return Ok(None);
    };

    let x_c = cluster.abscissa();
    let raw = control_function(x_c, width, config.v_max, config.omega_max);
    let smoothed = ema_update(state, raw, config.alpha_ema);
    state.previous_cluster_center = Some(x_c);
    state.initial = false;
    state.consecutive_faults = 0;
    Ok(Some(SpcOutput { cluster, x_c, d: x_c - width as f64 / 2.0, raw, smoothed }))
}

/// Result of one [`Controller::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRecord {
    /// 0-based control iteration index.
    pub step: u64,
    pub output: Option<SpcOutput>,
    /// Command sent to the actuator this period.
    pub published: VelocityCommand,
}

impl ControlRecord {
    pub fn is_fault(&self) -> bool {
        self.output.is_none()
    }
}

/// Actuator-facing controller: always yields a command.
#[derive(Debug, Clone)]
pub struct Controller {
    config: SpcConfig,
    state: ControllerState,
}

impl Controller {
    pub fn new(config: SpcConfig) -> Result<Self, SpcError> {
        config.validate()?;
        Ok(Self { config, state: ControllerState::default() })
    }

    pub fn config(&self) -> &SpcConfig {
        &self.config
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ControllerState {
        &mut self.state
    }

    /// Command the platform should hold while no map is available yet or
    /// after a fault.
    pub fn hold_command(&self) -> VelocityCommand {
        if self.state.consecutive_faults >= self.config.fault_timeout {
            VelocityCommand::ZERO
        } else {
            self.state.ema
        }
    }

    pub fn step(&mut self, map: &CtrlMap) -> Result<ControlRecord, SpcError> {
        let step = self.state.step_count;
        let output = spc_step(map, &mut self.state, &self.config)?;
        let published = match output {
            Some(out) => out.smoothed,
            None => self.hold_command(),
        };
        Ok(ControlRecord { step, output, published })
    }

    /// Counts an iteration whose map could not be built as a fault.
    pub fn discard(&mut self) -> ControlRecord {
        let step = self.state.step_count;
        self.state.step_count += 1;
        self.state.fault_count += 1;
        self.state.consecutive_faults = self.state.consecutive_faults.saturating_add(1);
        ControlRecord { step, output: None, published: self.hold_command() }
    }

    pub fn fault_rate(&self) -> Result<f64, SpcError> {
        fault_rate(&self.state)
    }
}
