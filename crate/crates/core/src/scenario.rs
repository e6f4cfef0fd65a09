//! Scenario files: a JSON description of a batch of closed-loop episodes,
//! the runner and the artifacts it writes.
//!
//! Precedence of settings is command-line overrides, then the file, then
//! built-in defaults.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{compute_midline, episode_metrics, EpisodeMetrics, Midline};
use crate::raster::RasterConfig;
use crate::report::{self, MetricsRow};
use crate::simworld::{
    generate_world, run_episode, CameraModel, EpisodeConfig, EpisodeLog, KinematicParams, Layout, Pose2D, World,
    WorldParams,
};
use crate::spc::SpcConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{}: {message}", location(path, *line))]
    Invalid { path: String, line: Option<usize>, message: String },
    #[error("episode {episode}: {message}")]
    Runtime { episode: usize, message: String },
}

fn location(path: &str, line: Option<usize>) -> String {
    match line {
        Some(l) => format!("{path}:{l}"),
        None => path.to_string(),
    }
}

impl ScenarioError {
    /// Whether the error lies in the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Parse { .. } | Self::Invalid { .. })
    }
}

/// Where the robot starts, relative to the lane center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartPose {
    /// Arc length along the rows, m.
    pub s: f64,
    /// Offset from the lane center, positive to the left, m.
    pub lateral: f64,
    /// Heading relative to the row direction, rad.
    pub heading: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self { s: 0.5, lateral: 0.0, heading: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Episode `i` uses world seed `seed + i`.
    pub seed: u64,
    pub episodes: usize,
    pub world: WorldParams,
    pub camera: CameraModel,
    pub raster: RasterConfig,
    pub spc: SpcConfig,
    pub kinematics: KinematicParams,
    pub max_steps: usize,
    pub seg_flip_prob: f64,
    pub start: StartPose,
    /// Output directory; relative paths resolve against the working directory.
    pub out: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let episode = EpisodeConfig::default();
        Self {
            name: "scenario".into(),
            seed: 0,
            episodes: 1,
            world: WorldParams::default(),
            camera: episode.camera,
            raster: episode.raster,
            spc: episode.spc,
            kinematics: episode.kinematics,
            max_steps: episode.max_steps,
            seg_flip_prob: episode.seg_flip_prob,
            start: StartPose::default(),
            out: None,
        }
    }
}

/// Values supplied on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub profile: Option<Layout>,
    pub s_window: Option<usize>,
    pub l_depth: Option<f64>,
    pub alpha_ema: Option<f64>,
    pub v_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub noise_frac: Option<f64>,
    pub min_cluster: Option<usize>,
    pub fusion_threshold: Option<usize>,
}

impl ScenarioSpec {
    /// Built-in scenario for a row layout.
    pub fn preset(layout: Layout) -> Self {
        let name = match layout {
            Layout::Straight => "straight",
            Layout::Curved => "curved",
        };
        let mut spec = Self { name: name.into(), ..Self::default() };
        spec.world.layout = layout;
        spec
    }

    /// Parses and validates a scenario. `path` only labels error messages.
    pub fn from_json(text: &str, path: &str) -> Result<Self, ScenarioError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        spec.validate().map_err(|(key, message)| ScenarioError::Invalid {
            path: path.to_string(),
            line: find_key_line(text, key),
            message,
        })?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let label = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: label.clone(), source })?;
        Self::from_json(&text, &label)
    }

    pub fn apply(&mut self, o: &ScenarioOverrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.profile {
            self.world.layout = v;
        }
        if let Some(v) = o.s_window {
            self.raster.s_window = v;
        }
        if let Some(v) = o.l_depth {
            self.raster.l_depth = v;
        }
        if let Some(v) = o.alpha_ema {
            self.spc.alpha_ema = v;
        }
        if let Some(v) = o.v_max {
            self.spc.v_max = v;
        }
        if let Some(v) = o.omega_max {
            self.spc.omega_max = v;
        }
        if let Some(v) = o.noise_frac {
            self.spc.noise_frac = v;
        }
        if let Some(v) = o.min_cluster {
            self.spc.min_cluster_len = Some(v);
        }
        if let Some(v) = o.fusion_threshold {
            self.raster.fusion_threshold = v;
        }
    }

    /// Checks every section; the error names the offending top-level key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.episodes == 0 {
            return Err(("episodes", "episodes must be at least 1".into()));
        }
        self.world.validate().map_err(|e| ("world", e.to_string()))?;
        self.camera.validate().map_err(|e| ("camera", e.to_string()))?;
        self.raster.validate().map_err(|e| ("raster", e.to_string()))?;
        self.spc.validate().map_err(|e| ("spc", e.to_string()))?;
        if !(self.kinematics.dt > 0.0 && self.kinematics.dt.is_finite()) {
            return Err(("kinematics", format!("dt must be positive, got {}", self.kinematics.dt)));
        }
        if self.max_steps == 0 {
            return Err(("max_steps", "max_steps must be at least 1".into()));
        }
        if !(0.0..=EpisodeConfig::MAX_FLIP_PROB).contains(&self.seg_flip_prob) {
            return Err(("seg_flip_prob", format!("seg_flip_prob {} outside [0, 0.05]", self.seg_flip_prob)));
        }
        let s = self.start;
        if !(s.s >= 0.0 && s.s < self.world.row_length) || !s.lateral.is_finite() || !s.heading.is_finite() {
            return Err(("start", format!("start pose {s:?} is outside the rows")));
        }
        Ok(())
    }

    pub fn episode_config(&self, noise_seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            raster: self.raster,
            spc: self.spc,
            camera: self.camera,
            kinematics: self.kinematics,
            max_steps: self.max_steps,
            seg_flip_prob: self.seg_flip_prob,
            noise_seed,
        }
    }

    pub fn world_seed(&self, episode: usize) -> u64 {
        self.seed.wrapping_add(episode as u64)
    }

    /// Noise stream of an episode, decorrelated from the world seed.
    pub fn noise_seed(&self, episode: usize) -> u64 {
        splitmix64(self.world_seed(episode) ^ 0x6e6f_6973_6521)
    }

    pub fn start_pose(&self, world: &World) -> Pose2D {
        world.pose_at(self.start.s, world.lane_offset() + self.start.lateral, self.start.heading)
    }

    /// Single-line JSON of the resolved scenario, for log headers.
    pub fn to_compact_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// 1-based line of the first occurrence of `"key"` followed by a colon.
pub fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|line| line.find(&needle).is_some_and(|i| line[i + needle.len()..].trim_start().starts_with(':')))
        .map(|i| i + 1)
}

pub struct EpisodeResult {
    pub index: usize,
    pub world_seed: u64,
    pub noise_seed: u64,
    pub world: World,
    pub midline: Midline,
    pub log: EpisodeLog,
    pub metrics: EpisodeMetrics,
}

impl EpisodeResult {
    pub fn metrics_row(&self) -> MetricsRow {
        MetricsRow {
            episode: self.index,
            world_seed: self.world_seed,
            noise_seed: self.noise_seed,
            curvature: self.world.curvature,
            metrics: self.metrics.clone(),
        }
    }
}

pub fn run_single(spec: &ScenarioSpec, index: usize) -> Result<EpisodeResult, ScenarioError> {
    let runtime = |message: String| ScenarioError::Runtime { episode: index, message };
    let world_seed = spec.world_seed(index);
    let noise_seed = spec.noise_seed(index);
    let world = generate_world(&spec.world, world_seed).map_err(|e| runtime(e.to_string()))?;
    let midline = compute_midline(&world).map_err(|e| runtime(e.to_string()))?;
    let log = run_episode(&world, &spec.episode_config(noise_seed), spec.start_pose(&world))
        .map_err(|e| runtime(e.to_string()))?;
    let metrics = episode_metrics(&log, &midline).map_err(|e| runtime(e.to_string()))?;
    Ok(EpisodeResult { index, world_seed, noise_seed, world, midline, log, metrics })
}

/// Runs all episodes in parallel; results come back in episode order.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<EpisodeResult>, ScenarioError> {
    (0..spec.episodes).into_par_iter().map(|i| run_single(spec, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub mean_mae: f64,
    pub max_mae: f64,
    pub mean_fault_rate: f64,
    pub collisions: usize,
    pub completed: usize,
}

impl RunSummary {
    pub fn from_results(results: &[EpisodeResult]) -> Self {
        let n = results.len().max(1) as f64;
        Self {
            episodes: results.len(),
            mean_mae: results.iter().map(|r| r.metrics.mae).sum::<f64>() / n,
            max_mae: results.iter().map(|r| r.metrics.mae).fold(0.0, f64::max),
            mean_fault_rate: results.iter().map(|r| r.metrics.fault_rate).sum::<f64>() / n,
            collisions: results.iter().filter(|r| r.metrics.collision).count(),
            completed: results.iter().filter(|r| r.metrics.outcome == crate::simworld::Outcome::Completed).count(),
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    scenario: &'a ScenarioSpec,
    summary: RunSummary,
    episodes: Vec<MetricsRow>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.display().to_string(), source }
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), ScenarioError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io_err(path))?;
    std::io::Write::flush(&mut w).map_err(io_err(path))
}

/// Writes per-episode logs and plots, `metrics.csv` and `report.json`.
pub fn write_artifacts(
    spec: &ScenarioSpec,
    results: &[EpisodeResult],
    dir: &Path,
) -> Result<RunSummary, ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    // The output location does not change the run; leaving it out keeps logs
    // written to different directories byte-identical.
    let config = ScenarioSpec { out: None, ..spec.clone() }.to_compact_json();
    for r in results {
        let metadata = vec![
            ("scenario".to_string(), spec.name.clone()),
            ("episode".to_string(), r.index.to_string()),
            ("world_seed".to_string(), r.world_seed.to_string()),
            ("noise_seed".to_string(), r.noise_seed.to_string()),
            ("curvature".to_string(), r.world.curvature.to_string()),
            ("dt".to_string(), r.log.dt.to_string()),
            ("outcome".to_string(), r.log.outcome.as_str().to_string()),
            ("config".to_string(), config.clone()),
        ];
        write_file(&dir.join(format!("episode_{:03}.csv", r.index)), |w| {
            report::write_episode_csv(w, &r.log, &metadata)
        })?;
        let rows = report::command_rows(&r.log);
        write_file(&dir.join(format!("commands_{:03}.csv", r.index)), |w| {
            report::write_command_csv(w, &rows, &metadata)
        })?;
        let svg = report::episode_svg(&r.world, Some(&r.midline), Some(&r.log));
        let svg_path = dir.join(format!("episode_{:03}.svg", r.index));
        fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;
    }
    let rows: Vec<MetricsRow> = results.iter().map(EpisodeResult::metrics_row).collect();
    write_file(&dir.join("metrics.csv"), |w| report::write_metrics_csv(w, &rows))?;
    let summary = RunSummary::from_results(results);
    let report = Report { scenario: spec, summary: summary.clone(), episodes: rows };
    write_file(&dir.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        std::io::Write::write_all(w, b"\n")
    })?;
    Ok(summary)
}
