//! Offline replay of recorded mask and depth frames through the pipeline.
//!
//! A manifest is a text file with one frame per line:
//!
//! ```text
//! # frame  mask              depth              [class]  [sequence]
//! 0        masks/m_000.png   depth/d_000.png    center   row1
//! ```
//!
//! Paths are relative to the manifest. Blank lines and `#` comments are
//! ignored. Consecutive lines with the same sequence label (the class when no
//! sequence is given) form one recording; the controller and the fusion
//! window restart at every new recording, and frame indices must increase by
//! one within it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::eval::{orientation_stats, ClassStats, ControlSample, OrientationClass};
use crate::raster::{self, FrameWindow, RasterBounds, RasterConfig, RasterError};
use crate::report::{timestamp, CommandRow};
use crate::spc::{Controller, SpcConfig};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Manifest { path: String, line: usize, message: String },
    #[error("sequence '{sequence}': frame {found} follows {previous}; missing frames")]
    MissingFrames { sequence: String, previous: u64, found: u64 },
    #[error("frame {frame}: {source}")]
    Raster {
        frame: u64,
        #[source]
        source: RasterError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Stats(#[from] crate::eval::EvalError),
}

impl ReplayError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Manifest { .. } | Self::Config(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub frame: u64,
    pub mask: PathBuf,
    pub depth: PathBuf,
    pub class: Option<OrientationClass>,
    pub sequence: Option<String>,
    /// 1-based line in the manifest.
    pub line: usize,
}

impl ManifestEntry {
    fn sequence_key(&self) -> String {
        match (&self.sequence, self.class) {
            (Some(s), _) => s.clone(),
            (None, Some(c)) => c.to_string(),
            (None, None) => String::new(),
        }
    }
}

pub fn parse_manifest(text: &str, base: &Path, label: &str) -> Result<Vec<ManifestEntry>, ReplayError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ReplayError::Manifest { path: label.to_string(), line, message };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(err(format!("expected 'frame mask depth [class] [sequence]', got {} fields", fields.len())));
        }
        let frame = fields[0].parse::<u64>().map_err(|_| err(format!("bad frame index '{}'", fields[0])))?;
        let class = fields.get(3).map(|c| c.parse::<OrientationClass>()).transpose().map_err(err)?;
        entries.push(ManifestEntry {
            frame,
            mask: base.join(fields[1]),
            depth: base.join(fields[2]),
            class,
            sequence: fields.get(4).map(|s| s.to_string()),
            line,
        });
    }
    if entries.is_empty() {
        return Err(ReplayError::Manifest {
            path: label.to_string(),
            line: 0,
            message: "manifest lists no frames".into(),
        });
    }
    Ok(entries)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, ReplayError> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ReplayError::Io { path: label.clone(), source })?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")), &label)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    pub raster: RasterConfig,
    pub spc: SpcConfig,
    /// Time between frames, s.
    pub period: f64,
    pub bounds: RasterBounds,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            raster: RasterConfig::default(),
            spc: SpcConfig::default(),
            period: 0.2,
            bounds: RasterBounds::default(),
        }
    }
}

/// Commands of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLog {
    pub name: String,
    pub class: Option<OrientationClass>,
    /// Control iterations after the fusion warmup.
    pub commands: Vec<CommandRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayResult {
    pub sequences: Vec<SequenceLog>,
    /// Present when at least one recording carries a class label.
    pub stats: Option<BTreeMap<OrientationClass, ClassStats>>,
}

impl ReplayResult {
    pub fn commands(&self) -> impl Iterator<Item = &CommandRow> {
        self.sequences.iter().flat_map(|s| s.commands.iter())
    }
}

fn run_sequence(entries: &[ManifestEntry], config: &ReplayConfig) -> Result<SequenceLog, ReplayError> {
    let mut controller = Controller::new(config.spc).map_err(|e| ReplayError::Config(e.to_string()))?;
    let mut window = FrameWindow::new(config.raster.s_window);
    let mut commands = Vec::new();
    let mut dims = None;
    let name = entries[0].sequence_key();
    for (i, entry) in entries.iter().enumerate() {
        if i > 0 && entry.frame != entries[i - 1].frame + 1 {
            return Err(ReplayError::MissingFrames {
                sequence: name,
                previous: entries[i - 1].frame,
                found: entry.frame,
            });
        }
        let raster_err = |source| ReplayError::Raster { frame: entry.frame, source };
        let mut seg = raster::load_mask(&entry.mask, &config.bounds).map_err(raster_err)?;
        seg.frame = entry.frame;
        let depth = raster::load_depth(&entry.depth, &config.bounds).map_err(raster_err)?;
        let here = seg.mask.dims();
        if depth.dims() != here || dims.is_some_and(|d| d != here) {
            let expected = dims.unwrap_or(here);
            let found = if depth.dims() != here { depth.dims() } else { here };
            return Err(raster_err(RasterError::DimensionMismatch {
                expected_w: expected.0,
                expected_h: expected.1,
                found_w: found.0,
                found_h: found.1,
            }));
        }
        dims = Some(here);
        window.push(seg);
        let Some(frames) = window.frames() else { continue };
        let record = match raster::preprocess(frames, &depth, &config.raster) {
            Ok(map) => controller.step(&map).map_err(|e| ReplayError::Config(e.to_string()))?,
            Err(RasterError::NoValidDepth) => controller.discard(),
            Err(e) => return Err(raster_err(e)),
        };
        commands.push(CommandRow {
            step: i,
            timestamp: timestamp(i, config.period),
            x_c: record.output.map(|o| o.x_c),
            d: record.output.map(|o| o.d),
            raw: record.output.map(|o| o.raw),
            published: record.published,
            fault: record.output.is_none(),
        });
    }
    Ok(SequenceLog { name, class: entries[0].class, commands })
}

/// Streams every recording through fusion, depth gating and the controller.
pub fn replay(entries: &[ManifestEntry], config: &ReplayConfig) -> Result<ReplayResult, ReplayError> {
    config.raster.validate().map_err(|e| ReplayError::Config(e.to_string()))?;
    config.spc.validate().map_err(|e| ReplayError::Config(e.to_string()))?;
    let mut sequences = Vec::new();
    let mut start = 0;
    while start < entries.len() {
        let key = entries[start].sequence_key();
        let len = entries[start..].iter().take_while(|e| e.sequence_key() == key).count();
        sequences.push(run_sequence(&entries[start..start + len], config)?);
        start += len;
    }

    let mut groups: BTreeMap<OrientationClass, Vec<Vec<ControlSample>>> = BTreeMap::new();
    for seq in &sequences {
        if let Some(class) = seq.class {
            let samples = seq
                .commands
                .iter()
                .map(|c| ControlSample { x_c: c.x_c, raw: c.raw, published: c.published, fault: c.fault })
                .collect();
            groups.entry(class).or_default().push(samples);
        }
    }
    let stats = if groups.is_empty() { None } else { Some(orientation_stats(&groups)?) };
    Ok(ReplayResult { sequences, stats })
}
