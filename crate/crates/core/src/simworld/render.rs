use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Pose2D, SimError, World};
use crate::raster::{BinaryMap, DepthMap, SegMap};

/// Pinhole RGB-D camera mounted on the robot, looking along its heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// rad
    pub hfov: f64,
    /// rad
    pub vfov: f64,
    pub width: usize,
    pub height: usize,
    /// Height of the optical center above ground, m.
    pub mount_height: f64,
    /// Downward pitch, rad.
    pub tilt: f64,
    /// Returns at or beyond this depth are dropped, m.
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { hfov: 1.204, vfov: 0.737, width: 224, height: 224, mount_height: 0.10, tilt: 0.0, max_range: 6.0 }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !fov_ok(self.hfov) || !fov_ok(self.vfov) {
            return Err(SimError::InvalidParams(format!("fov ({}, {}) outside (0, pi)", self.hfov, self.vfov)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SimError::InvalidParams("camera resolution must be non-zero".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(SimError::InvalidParams(format!("max_range must be positive, got {}", self.max_range)));
        }
        if self.tilt.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(SimError::InvalidParams(format!("tilt {} out of range", self.tilt)));
        }
        Ok(())
    }

    pub fn focal_x(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov / 2.0).tan()
    }

    pub fn focal_y(&self) -> f64 {
        self.height as f64 / 2.0 / (self.vfov / 2.0).tan()
    }
}

/// World-frame camera axes and origin for one pose.
struct CameraFrame {
    origin: Vector3<f64>,
    forward: Vector3<f64>,
    left: Vector3<f64>,
    up: Vector3<f64>,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl CameraFrame {
    fn new(camera: &CameraModel, pose: &Pose2D) -> Self {
        let (st, ct) = pose.theta.sin_cos();
        let (sp, cp) = camera.tilt.sin_cos();
        Self {
            origin: Vector3::new(pose.x, pose.y, camera.mount_height),
            forward: Vector3::new(ct * cp, st * cp, -sp),
            left: Vector3::new(-st, ct, 0.0),
            up: Vector3::new(ct * sp, st * sp, cp),
            fx: camera.focal_x(),
            fy: camera.focal_y(),
            cx: camera.width as f64 / 2.0,
            cy: camera.height as f64 / 2.0,
        }
    }

    /// Ray through the center of pixel (row, col), scaled so that its
    /// optical-axis component is 1; the ray parameter is then the depth.
    fn ray(&self, row: usize, col: usize) -> Vector3<f64> {
        let a = -((col as f64 + 0.5) - self.cx) / self.fx;
        let b = -((row as f64 + 0.5) - self.cy) / self.fy;
        self.forward + self.left * a + self.up * b
    }

    /// Continuous (col, row) image coordinates of a point, if in front.
    fn project(&self, p: Vector3<f64>) -> Option<(f64, f64)> {
        let rel = p - self.origin;
        let z = rel.dot(&self.forward);
        if z <= 1e-6 {
            return None;
        }
        Some((self.cx - rel.dot(&self.left) / z * self.fx, self.cy - rel.dot(&self.up) / z * self.fy))
    }
}

/// Upright box footprint in its own frame.
struct CanopyBox {
    center: Vector2<f64>,
    axis: Vector2<f64>,
    half: f64,
    height: f64,
}

impl CanopyBox {
    fn corners(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let normal = Vector2::new(-self.axis.y, self.axis.x);
        [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)].into_iter().flat_map(move |(a, b)| {
            let p = self.center + self.axis * (a * self.half) + normal * (b * self.half);
            [Vector3::new(p.x, p.y, 0.0), Vector3::new(p.x, p.y, self.height)]
        })
    }

    /// Entry parameter of the ray `origin + t * dir` (slab method), if any
    /// part of the box lies at t >= 0.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let normal = Vector2::new(-self.axis.y, self.axis.x);
        let rel = Vector2::new(origin.x, origin.y) - self.center;
        let dir2 = Vector2::new(dir.x, dir.y);
        let slabs = [
            (rel.dot(&self.axis), dir2.dot(&self.axis), -self.half, self.half),
            (rel.dot(&normal), dir2.dot(&normal), -self.half, self.half),
            (origin.z, dir.z, 0.0, self.height),
        ];
        let mut t_in = f64::NEG_INFINITY;
        let mut t_out = f64::INFINITY;
        for (o, d, lo, hi) in slabs {
            if d.abs() < 1e-12 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let (a, b) = ((lo - o) / d, (hi - o) / d);
            t_in = t_in.max(a.min(b));
            t_out = t_out.min(a.max(b));
        }
        (t_in <= t_out && t_out >= 0.0).then_some(t_in)
    }
}

/// Nearest distance reported for a ray starting inside a canopy, m.
const MIN_DEPTH: f64 = 1e-3;

/// Ray-casts the scene from `pose`. The mask is a perfect segmentation:
/// 1 where the first surface hit is canopy. Depth is measured along the
/// optical axis and is invalid where nothing is hit before `max_range`.
pub fn render_views(world: &World, pose: &Pose2D, camera: &CameraModel, frame: u64) -> (SegMap, DepthMap) {
    let (w, h) = (camera.width, camera.height);
    let cam = CameraFrame::new(camera, pose);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut seg = vec![0u8; w * h];

    // Ground plane.
    for row in 0..h {
        for col in 0..w {
            let dir = cam.ray(row, col);
            if dir.z < 0.0 {
                let t = -cam.origin.z / dir.z;
                if t < camera.max_range {
                    depth[row * w + col] = t;
                }
            }
        }
    }

    // Longest ray length per unit depth bounds the reach of the frustum.
    let corner_scale = (1.0 + (camera.hfov / 2.0).tan().powi(2) + (camera.vfov / 2.0).tan().powi(2)).sqrt();
    let reach = camera.max_range * corner_scale;
    let eye = Vector2::new(pose.x, pose.y);
    let ahead = Vector2::new(cam.forward.x, cam.forward.y);

    for row_geom in &world.rows {
        let half = row_geom.canopy_halfwidth;
        let radius = half * std::f64::consts::SQRT_2;
        for plant in &row_geom.plants {
            let center = Vector2::new(plant.position.x, plant.position.y);
            let rel = center - eye;
            if rel.norm() > reach + radius || rel.dot(&ahead) < -radius - 1e-9 {
                continue;
            }
            let canopy = CanopyBox {
                center,
                axis: Vector2::new(plant.heading.cos(), plant.heading.sin()),
                half,
                height: row_geom.canopy_height,
            };
            let (c0, c1, r0, r1) = pixel_bounds(&cam, &canopy, w, h);
            for r in r0..r1 {
                for c in c0..c1 {
                    let dir = cam.ray(r, c);
                    let Some(t) = canopy.intersect(&cam.origin, &dir) else { continue };
                    let t = t.max(MIN_DEPTH);
                    let idx = r * w + c;
                    if t < camera.max_range && t < depth[idx] {
                        depth[idx] = t;
                        seg[idx] = 1;
                    }
                }
            }
        }
    }

    let depth_cells = depth.into_iter().map(|t| if t.is_finite() { t as f32 } else { DepthMap::INVALID }).collect();
    let mask = BinaryMap::new(w, h, seg).expect("seg buffer is binary and sized");
    let depth = DepthMap::new(w, h, depth_cells).expect("depth buffer sized");
    (SegMap::new(frame, mask), depth)
}

/// Pixel rectangle (col0, col1, row0, row1), half-open, covering the box.
fn pixel_bounds(cam: &CameraFrame, canopy: &CanopyBox, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for corner in canopy.corners() {
        match cam.project(corner) {
            Some((u, v)) => {
                lo = (lo.0.min(u), lo.1.min(v));
                hi = (hi.0.max(u), hi.1.max(v));
            }
            // A corner behind the camera: the projection is unbounded.
            None => return (0, w, 0, h),
        }
    }
    let clamp = |x: f64, max: usize| x.clamp(0.0, max as f64) as usize;
    (
        clamp(lo.0.floor() - 1.0, w),
        clamp(hi.0.ceil() + 1.0, w),
        clamp(lo.1.floor() - 1.0, h),
        clamp(hi.1.ceil() + 1.0, h),
    )
}

/// Flips each mask pixel independently with probability `p`.
pub fn apply_flip_noise<R: Rng>(seg: &mut SegMap, p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    let w = seg.mask.width();
    for row in 0..seg.mask.height() {
        for col in 0..w {
            if rng.gen_bool(p) {
                let v = seg.mask.get(row, col) == 0;
                seg.mask.set(row, col, v);
            }
        }
    }
}
