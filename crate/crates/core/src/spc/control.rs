use serde::{Deserialize, Serialize};

use super::{ControllerState, SpcError};

/// Planar velocity command in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// Forward speed, m/s.
    pub v_x: f64,
    /// Yaw rate about +z (counter-clockwise positive), rad/s.
    pub omega_z: f64,
}

impl VelocityCommand {
    pub const ZERO: Self = Self { v_x: 0.0, omega_z: 0.0 };

    pub fn new(v_x: f64, omega_z: f64) -> Self {
        Self { v_x, omega_z }
    }
}

/// Quadratic proportional law on the offset `d = x_c - w/2` of the steering
/// abscissa from the frame center. Off-center corridors turn the robot
/// toward them and slow it down by the same normalized amount.
pub fn control_function(x_c: f64, width: usize, v_max: f64, omega_max: f64) -> VelocityCommand {
    let half = width as f64 / 2.0;
    let d = x_c - half;
    let ratio = (d * d) / (half * half);
    let omega = if d >= 0.0 { -omega_max * ratio } else { omega_max * ratio };
    let v = v_max * (1.0 - ratio);
    VelocityCommand { v_x: v.clamp(0.0, v_max), omega_z: omega.clamp(-omega_max, omega_max) }
}

/// One step of `ema <- ema * (1 - alpha) + raw * alpha`; returns the new
/// smoothed command.
pub fn ema_update(state: &mut ControllerState, raw: VelocityCommand, alpha: f64) -> VelocityCommand {
    let keep = 1.0 - alpha;
    state.ema = VelocityCommand {
        v_x: state.ema.v_x * keep + raw.v_x * alpha,
        omega_z: state.ema.omega_z * keep + raw.omega_z * alpha,
    };
    state.ema
}

/// Share of control iterations that produced no command, in percent.
pub fn fault_rate(state: &ControllerState) -> Result<f64, SpcError> {
    if state.step_count == 0 {
        return Err(SpcError::NoSteps);
    }
    Ok(100.0 * state.fault_count as f64 / state.step_count as f64)
}
