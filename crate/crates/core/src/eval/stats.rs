use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::spc::VelocityCommand;

/// Fixed camera orientation of a recorded sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationClass {
    Center,
    Left,
    Right,
}

impl OrientationClass {
    pub const ALL: [OrientationClass; 3] = [Self::Center, Self::Left, Self::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Center => "center",
            Self::Left => "left",
            Self::Right => "right",
        }
    }
}

impl fmt::Display for OrientationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrientationClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "center" | "centre" => Ok(Self::Center),
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            other => Err(format!("unknown orientation class '{other}'")),
        }
    }
}

/// One control iteration as seen by the statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub x_c: Option<f64>,
    pub raw: Option<VelocityCommand>,
    pub published: VelocityCommand,
    pub fault: bool,
}

/// Sample mean and (n - 1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Streaming mean/variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn finish(&self) -> MeanStd {
        let std = if self.n > 1 { (self.m2 / (self.n - 1) as f64).sqrt() } else { 0.0 };
        MeanStd { mean: self.mean, std, n: self.n }
    }
}

pub fn mean_std(values: impl IntoIterator<Item = f64>) -> MeanStd {
    let mut acc = RunningStats::default();
    values.into_iter().for_each(|x| acc.push(x));
    acc.finish()
}

/// Statistics of one orientation class. Velocities are reported before and
/// after smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassStats {
    pub abscissa: MeanStd,
    pub v_raw: MeanStd,
    pub omega_raw: MeanStd,
    pub v_ema: MeanStd,
    pub omega_ema: MeanStd,
    /// Percent of iterations without a command.
    pub fault_rate: f64,
    pub iterations: usize,
}

/// Pools all logs of each class. Faulted iterations only count toward the
/// fault rate.
pub fn orientation_stats(
    groups: &BTreeMap<OrientationClass, Vec<Vec<ControlSample>>>,
) -> Result<BTreeMap<OrientationClass, ClassStats>, EvalError> {
    let mut out = BTreeMap::new();
    for (&class, logs) in groups {
        let samples: Vec<&ControlSample> = logs.iter().flatten().collect();
        let ok: Vec<&ControlSample> = samples.iter().copied().filter(|s| !s.fault).collect();
        if ok.is_empty() {
            return Err(EvalError::EmptyClass(class.to_string()));
        }
        let faults = samples.len() - ok.len();
        let stats = ClassStats {
            abscissa: mean_std(ok.iter().filter_map(|s| s.x_c)),
            v_raw: mean_std(ok.iter().filter_map(|s| s.raw.map(|r| r.v_x))),
            omega_raw: mean_std(ok.iter().filter_map(|s| s.raw.map(|r| r.omega_z))),
            v_ema: mean_std(ok.iter().map(|s| s.published.v_x)),
            omega_ema: mean_std(ok.iter().map(|s| s.published.omega_z)),
            fault_rate: 100.0 * faults as f64 / samples.len() as f64,
            iterations: samples.len(),
        };
        out.insert(class, stats);
    }
    Ok(out)
}
