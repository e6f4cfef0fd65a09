//! CSV logs and SVG plots. All writers are deterministic: floats use their
//! shortest round-trip form and nothing time-dependent is emitted.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::eval::{EpisodeMetrics, Midline};
use crate::simworld::{EpisodeLog, World};
use crate::spc::VelocityCommand;

/// One line of the command log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandRow {
    pub step: usize,
    /// s
    pub timestamp: f64,
    pub x_c: Option<f64>,
    pub d: Option<f64>,
    pub raw: Option<VelocityCommand>,
    pub published: VelocityCommand,
    pub fault: bool,
}

pub const COMMAND_COLUMNS: [&str; 9] = ["step", "timestamp", "x_c", "d", "v_raw", "w_raw", "v_ema", "w_ema", "fault"];
pub const EPISODE_COLUMNS: [&str; 9] = ["step", "x", "y", "theta", "x_c", "v_ema", "w_ema", "fault", "outcome"];

/// Control iterations of an episode, warmup steps excluded.
pub fn command_rows(log: &EpisodeLog) -> Vec<CommandRow> {
    log.records
        .iter()
        .filter(|r| r.controlled)
        .map(|r| CommandRow {
            step: r.step,
            timestamp: timestamp(r.step, log.dt),
            x_c: r.x_c,
            d: r.d,
            raw: r.raw,
            published: r.published,
            fault: r.fault,
        })
        .collect()
}

/// Step time rounded to the microsecond so `3 * 0.2` prints as `0.6`.
pub fn timestamp(step: usize, dt: f64) -> f64 {
    (step as f64 * dt * 1e6).round() / 1e6
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// `# key: value` lines ahead of the CSV header. Values must be single-line.
fn write_metadata(out: &mut impl Write, metadata: &[(String, String)]) -> io::Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

pub fn write_command_csv(mut out: impl Write, rows: &[CommandRow], metadata: &[(String, String)]) -> io::Result<()> {
    write_metadata(&mut out, metadata)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMMAND_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.timestamp.to_string(),
            opt(r.x_c),
            opt(r.d),
            opt(r.raw.map(|c| c.v_x)),
            opt(r.raw.map(|c| c.omega_z)),
            r.published.v_x.to_string(),
            r.published.omega_z.to_string(),
            flag(r.fault).to_string(),
        ])?;
    }
    w.flush()
}

/// Pose trace of an episode. The outcome column is filled on the last row
/// only.
pub fn write_episode_csv(mut out: impl Write, log: &EpisodeLog, metadata: &[(String, String)]) -> io::Result<()> {
    write_metadata(&mut out, metadata)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_COLUMNS)?;
    let last = log.records.len().saturating_sub(1);
    for (i, r) in log.records.iter().enumerate() {
        w.write_record([
            r.step.to_string(),
            r.pose.x.to_string(),
            r.pose.y.to_string(),
            r.pose.theta.to_string(),
            opt(r.x_c),
            r.published.v_x.to_string(),
            r.published.omega_z.to_string(),
            flag(r.fault).to_string(),
            if i == last { log.outcome.as_str().to_string() } else { String::new() },
        ])?;
    }
    w.flush()
}

/// Per-episode metrics with the seeds that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub world_seed: u64,
    pub noise_seed: u64,
    pub curvature: f64,
    #[serde(flatten)]
    pub metrics: EpisodeMetrics,
}

pub fn write_metrics_csv(out: impl Write, rows: &[MetricsRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "episode",
        "world_seed",
        "noise_seed",
        "curvature",
        "mae",
        "fault_rate",
        "collision",
        "outcome",
        "steps",
        "control_steps",
        "faults",
        "midline_residual",
    ])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.episode.to_string(),
            r.world_seed.to_string(),
            r.noise_seed.to_string(),
            r.curvature.to_string(),
            m.mae.to_string(),
            m.fault_rate.to_string(),
            flag(m.collision).to_string(),
            m.outcome.as_str().to_string(),
            m.steps.to_string(),
            m.control_steps.to_string(),
            m.faults.to_string(),
            m.midline_residual.to_string(),
        ])?;
    }
    w.flush()
}

/// Pixels per meter in plots.
const SVG_SCALE: f64 = 20.0;
const SVG_MARGIN: f64 = 1.0;

struct Canvas {
    min_x: f64,
    max_y: f64,
}

impl Canvas {
    fn pt(&self, x: f64, y: f64) -> String {
        format!("{:.2},{:.2}", (x - self.min_x + SVG_MARGIN) * SVG_SCALE, (self.max_y - y + SVG_MARGIN) * SVG_SCALE)
    }

    fn polyline(&self, points: impl IntoIterator<Item = (f64, f64)>) -> String {
        points.into_iter().map(|(x, y)| self.pt(x, y)).collect::<Vec<_>>().join(" ")
    }
}

/// Top-down plot: plants and row lines in green, the midline in cyan, the
/// trajectory as a dashed red line.
pub fn episode_svg(world: &World, midline: Option<&Midline>, log: Option<&EpisodeLog>) -> String {
    let (mut lo, mut hi) = world.bounds();
    if let Some(log) = log {
        for r in &log.records {
            lo.x = lo.x.min(r.pose.x);
            lo.y = lo.y.min(r.pose.y);
            hi.x = hi.x.max(r.pose.x);
            hi.y = hi.y.max(r.pose.y);
        }
    }
    let canvas = Canvas { min_x: lo.x, max_y: hi.y };
    let width = (hi.x - lo.x + 2.0 * SVG_MARGIN) * SVG_SCALE;
    let height = (hi.y - lo.y + 2.0 * SVG_MARGIN) * SVG_SCALE;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for row in &world.rows {
        let line = canvas.polyline(row.plants.iter().map(|p| (p.position.x, p.position.y)));
        let _ = writeln!(svg, r##"<polyline points="{line}" fill="none" stroke="#8fbf7f" stroke-width="2"/>"##);
        for p in &row.plants {
            let _ = writeln!(
                svg,
                r##"<circle cx="{}" cy="{}" r="{:.2}" fill="#2e7d32"/>"##,
                format_args!("{:.2}", (p.position.x - canvas.min_x + SVG_MARGIN) * SVG_SCALE),
                format_args!("{:.2}", (canvas.max_y - p.position.y + SVG_MARGIN) * SVG_SCALE),
                row.canopy_halfwidth * SVG_SCALE
            );
        }
    }
    if let Some(m) = midline {
        let (a, b) = m.domain;
        let n = 200;
        let line = canvas.polyline((0..=n).map(|i| {
            let p = m.point(a + (b - a) * i as f64 / n as f64);
            (p.x, p.y)
        }));
        let _ = writeln!(svg, r#"<polyline points="{line}" fill="none" stroke="cyan" stroke-width="2"/>"#);
    }
    if let Some(log) = log {
        let line = canvas.polyline(log.records.iter().map(|r| (r.pose.x, r.pose.y)));
        let _ = writeln!(
            svg,
            r#"<polyline points="{line}" fill="none" stroke="red" stroke-width="2" stroke-dasharray="6,4"/>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}
