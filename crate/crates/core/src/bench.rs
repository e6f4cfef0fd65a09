//! Latency of each pipeline stage on synthetic frames.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eval::{mean_std, MeanStd};
use crate::raster::{self, BinaryMap, DepthMap, RasterConfig, SegMap};
use crate::spc::{
    column_histogram, control_function, ema_update, find_zero_clusters, noise_reduction, select_cluster, Controller,
    ControllerState, SpcConfig,
};

pub const STAGES: [&str; 8] =
    ["fusion", "depth_mask", "intersection", "noise_reduction", "histogram", "clustering", "control_ema", "full_step"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    /// Milliseconds.
    pub latency_ms: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub stages: Vec<StageTiming>,
}

impl ResolutionReport {
    pub fn stage(&self, name: &str) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Mean latency of the complete step, ms.
    pub fn full_step_ms(&self) -> f64 {
        self.stage("full_step").map(|s| s.latency_ms.mean).unwrap_or(f64::NAN)
    }
}

/// Vine on both sides of a central corridor, with holes in the canopy, and a
/// depth ramp that grows toward the top of the image.
pub fn synthetic_frames(width: usize, height: usize, window: usize, seed: u64) -> (Vec<SegMap>, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (width / 4, width - width / 4);
    let frames = (0..window as u64)
        .map(|frame| {
            let mask = BinaryMap::from_fn(width, height, |_, c| (c < band.0 || c >= band.1) && !rng.gen_bool(0.05));
            SegMap::new(frame, mask)
        })
        .collect();
    let cells = (0..width * height).map(|i| 0.5 + 5.0 * (1.0 - (i / width) as f32 / height as f32)).collect();
    let depth = DepthMap::new(width, height, cells).expect("sizes match");
    (frames, depth)
}

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = black_box(f());
    (out, t.elapsed().as_secs_f64() * 1e3)
}

/// Times every stage `iterations` times at each resolution.
pub fn run_bench(
    resolutions: &[(usize, usize)],
    iterations: usize,
    raster_cfg: &RasterConfig,
    spc_cfg: &SpcConfig,
) -> Result<Vec<ResolutionReport>, String> {
    raster_cfg.validate().map_err(|e| e.to_string())?;
    spc_cfg.validate().map_err(|e| e.to_string())?;
    if iterations == 0 {
        return Err("iterations must be at least 1".into());
    }
    let mut reports = Vec::new();
    for &(w, h) in resolutions {
        if w == 0 || h == 0 {
            return Err(format!("invalid resolution {w}x{h}"));
        }
        let (frames, depth) = synthetic_frames(w, h, raster_cfg.s_window, w as u64 * 31 + h as u64);
        let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(iterations); STAGES.len()];
        let mut controller = Controller::new(*spc_cfg).map_err(|e| e.to_string())?;
        let mut state = ControllerState::default();
        for _ in 0..iterations {
            let (cum, t0) = time(|| raster::fuse_segmentations(&frames, raster_cfg.s_window));
            let cum = cum.map_err(|e| e.to_string())?;
            let (dmask, t1) = time(|| raster::depth_binary_mask(&depth, raster_cfg.l_depth));
            let dmask = dmask.map_err(|e| e.to_string())?;
            let (ctrl, t2) = time(|| raster::make_ctrl_map(&cum, &dmask, raster_cfg.fusion_threshold));
            let ctrl = ctrl.map_err(|e| e.to_string())?;
            let (clean, t3) = time(|| noise_reduction(&ctrl, spc_cfg.noise_frac));
            let (profile, t4) = time(|| column_histogram(&clean));
            let (cluster, t5) = time(|| {
                let clusters = find_zero_clusters(&profile, spc_cfg.min_cluster_len_for(w));
                select_cluster(&clusters, &state, w, spc_cfg.pcc_near_tol_for(w))
            });
            let x_c = cluster.map(|c| c.abscissa()).unwrap_or(w as f64 / 2.0);
            let (_, t6) = time(|| {
                let raw = control_function(x_c, w, spc_cfg.v_max, spc_cfg.omega_max);
                ema_update(&mut state, raw, spc_cfg.alpha_ema)
            });
            let (step, t7) = time(|| {
                raster::preprocess(&frames, &depth, raster_cfg)
                    .map_err(|e| e.to_string())
                    .and_then(|map| controller.step(&map).map_err(|e| e.to_string()))
            });
            step?;
            for (s, t) in samples.iter_mut().zip([t0, t1, t2, t3, t4, t5, t6, t7]) {
                s.push(t);
            }
        }
        let stages =
            STAGES.iter().zip(samples).map(|(&stage, s)| StageTiming { stage, latency_ms: mean_std(s) }).collect();
        reports.push(ResolutionReport { width: w, height: h, iterations, stages });
    }
    Ok(reports)
}
