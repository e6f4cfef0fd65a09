use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_flip_noise, render_views, step_kinematics, CameraModel, KinematicParams, Pose2D, SimError, World};
use crate::raster::{self, FrameWindow, RasterConfig};
use crate::spc::{Controller, SpcConfig, VelocityCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// Left the far end of the rows.
    Completed,
    Collision,
    /// Ran out of steps.
    Truncated,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Collision => "collision",
            Outcome::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub raster: RasterConfig,
    pub spc: SpcConfig,
    pub camera: CameraModel,
    pub kinematics: KinematicParams,
    pub max_steps: usize,
    /// Per-pixel flip probability applied to the rendered masks.
    pub seg_flip_prob: f64,
    pub noise_seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            raster: RasterConfig::default(),
            spc: SpcConfig::default(),
            camera: CameraModel::default(),
            kinematics: KinematicParams::default(),
            max_steps: 600,
            seg_flip_prob: 0.0,
            noise_seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub const MAX_FLIP_PROB: f64 = 0.05;

    pub fn validate(&self) -> Result<(), SimError> {
        self.raster.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        self.spc.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        self.camera.validate()?;
        if !(self.kinematics.dt > 0.0 && self.kinematics.dt.is_finite()) {
            return Err(SimError::InvalidParams(format!("dt must be positive, got {}", self.kinematics.dt)));
        }
        if !(0.0..=Self::MAX_FLIP_PROB).contains(&self.seg_flip_prob) {
            return Err(SimError::InvalidParams(format!("seg_flip_prob {} outside [0, 0.05]", self.seg_flip_prob)));
        }
        Ok(())
    }
}

/// Everything recorded for one simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Pose at the start of the step, before the command is applied.
    pub pose: Pose2D,
    /// False while the fusion window is still filling.
    pub controlled: bool,
    pub fault: bool,
    pub x_c: Option<f64>,
    pub d: Option<f64>,
    pub raw: Option<VelocityCommand>,
    pub published: VelocityCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
    pub dt: f64,
}

impl EpisodeLog {
    pub fn control_steps(&self) -> usize {
        self.records.iter().filter(|r| r.controlled).count()
    }

    pub fn fault_count(&self) -> usize {
        self.records.iter().filter(|r| r.fault).count()
    }

    /// Percentage of control iterations that produced no command; zero when
    /// no iteration ran.
    pub fn fault_rate(&self) -> f64 {
        match self.control_steps() {
            0 => 0.0,
            n => 100.0 * self.fault_count() as f64 / n as f64,
        }
    }

    pub fn collided(&self) -> bool {
        self.outcome == Outcome::Collision
    }
}

/// Closed-loop run: render, preprocess, control, integrate, until the robot
/// leaves the rows, touches a canopy or `max_steps` is reached.
pub fn run_episode(world: &World, config: &EpisodeConfig, start: Pose2D) -> Result<EpisodeLog, SimError> {
    config.validate()?;
    let mut controller = Controller::new(config.spc).map_err(|e| SimError::InvalidParams(e.to_string()))?;
    let mut window = FrameWindow::new(config.raster.s_window);
    let mut rng = ChaCha8Rng::seed_from_u64(config.noise_seed);
    let dt = config.kinematics.dt;

    let mut pose = start;
    let mut records = Vec::new();
    let mut outcome = Outcome::Truncated;
    let mut published = VelocityCommand::ZERO;

    for step in 0..config.max_steps {
        let mut record =
            StepRecord { step, pose, controlled: false, fault: false, x_c: None, d: None, raw: None, published };
        if world.in_canopy(pose.position()) {
            records.push(record);
            outcome = Outcome::Collision;
            break;
        }
        if world.project(pose.position()).0 >= world.params.row_length {
            records.push(record);
            outcome = Outcome::Completed;
            break;
        }

        let (mut seg, depth) = render_views(world, &pose, &config.camera, step as u64);
        apply_flip_noise(&mut seg, config.seg_flip_prob, &mut rng);
        window.push(seg);
        if let Some(frames) = window.frames() {
            let ctrl = match raster::preprocess(frames, &depth, &config.raster) {
                Ok(map) => Some(map),
                // Nothing in range: no depth to gate with, same as a discarded frame.
                Err(raster::RasterError::NoValidDepth) => None,
                Err(e) => return Err(SimError::Pipeline(e.to_string())),
            };
            record.controlled = true;
            let rec = match ctrl {
                Some(map) => controller.step(&map).map_err(|e| SimError::Pipeline(e.to_string()))?,
                None => controller.discard(),
            };
            published = rec.published;
            match rec.output {
                Some(out) => {
                    record.x_c = Some(out.x_c);
                    record.d = Some(out.d);
                    record.raw = Some(out.raw);
                }
                None => record.fault = true,
            }
            record.published = published;
        }
        records.push(record);
        pose = step_kinematics(pose, published, dt);
    }

    Ok(EpisodeLog { records, outcome, dt })
}
