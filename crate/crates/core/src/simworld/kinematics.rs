use std::f64::consts::{PI, TAU};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::spc::VelocityCommand;

/// Planar robot pose; `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(TAU) - PI;
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicParams {
    /// Command period, s.
    pub dt: f64,
}

impl Default for KinematicParams {
    fn default() -> Self {
        Self { dt: 0.2 }
    }
}

const STRAIGHT_EPS: f64 = 1e-9;

/// Holds `cmd` for `dt` seconds on a unicycle and integrates exactly.
pub fn step_kinematics(pose: Pose2D, cmd: VelocityCommand, dt: f64) -> Pose2D {
    let VelocityCommand { v_x: v, omega_z: w } = cmd;
    let theta = pose.theta;
    if w.abs() > STRAIGHT_EPS {
        let r = v / w;
        let next = theta + w * dt;
        Pose2D::new(pose.x + r * (next.sin() - theta.sin()), pose.y - r * (next.cos() - theta.cos()), next)
    } else {
        Pose2D::new(pose.x + v * dt * theta.cos(), pose.y + v * dt * theta.sin(), theta + w * dt)
    }
}
