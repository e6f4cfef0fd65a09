use std::f64::consts::PI;

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Pose2D, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Straight,
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveDirection {
    Left,
    Right,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub layout: Layout,
    /// Distance between adjacent row centerlines, m.
    pub inter_row: f64,
    /// Nominal distance between plants along a row, m.
    pub plant_spacing: f64,
    pub n_rows: usize,
    /// Length of the rows along the reference path, m.
    pub row_length: f64,
    /// Curved layouts draw their radius uniformly from this range, m.
    pub curve_radius: [f64; 2],
    pub curve_direction: CurveDirection,
    pub canopy_halfwidth: f64,
    pub canopy_height: f64,
    /// Maximum plant displacement from its nominal position, m.
    pub jitter: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            layout: Layout::Straight,
            inter_row: 1.8,
            plant_spacing: 0.85,
            n_rows: 4,
            row_length: 40.0,
            curve_radius: [25.0, 40.0],
            curve_direction: CurveDirection::Random,
            canopy_halfwidth: 0.25,
            canopy_height: 1.8,
            jitter: 0.05,
        }
    }
}

impl WorldParams {
    pub const INTER_ROW_RANGE: (f64, f64) = (1.70, 2.00);
    pub const PLANT_SPACING_RANGE: (f64, f64) = (0.70, 1.00);
    pub const MAX_JITTER: f64 = 0.05;

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidParams(msg));
        let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo - 1e-12 && v <= hi + 1e-12;
        if !in_range(self.inter_row, Self::INTER_ROW_RANGE) {
            return bad(format!("inter_row {} outside [1.70, 2.00] m", self.inter_row));
        }
        if !in_range(self.plant_spacing, Self::PLANT_SPACING_RANGE) {
            return bad(format!("plant_spacing {} outside [0.70, 1.00] m", self.plant_spacing));
        }
        if self.n_rows < 2 {
            return bad(format!("need at least 2 rows, got {}", self.n_rows));
        }
        if !(self.row_length > 0.0 && self.row_length.is_finite()) {
            return bad(format!("row_length must be positive, got {}", self.row_length));
        }
        if !(self.canopy_halfwidth > 0.0 && self.canopy_height > 0.0) {
            return bad("canopy dimensions must be positive".into());
        }
        if 2.0 * self.canopy_halfwidth >= self.inter_row {
            return bad("canopies of adjacent rows overlap".into());
        }
        if !(0.0..=Self::MAX_JITTER + 1e-12).contains(&self.jitter) {
            return bad(format!("jitter {} outside [0, 0.05] m", self.jitter));
        }
        if self.layout == Layout::Curved {
            let [lo, hi] = self.curve_radius;
            let reach = self.inter_row * self.n_rows as f64 / 2.0 + self.canopy_halfwidth;
            if !(lo > reach && hi >= lo && hi.is_finite()) {
                return bad(format!("curve_radius [{lo}, {hi}] must be ordered and exceed {reach:.2} m"));
            }
            // Beyond a half turn the reference projection becomes ambiguous.
            if self.row_length / lo >= PI {
                return bad("rows longer than half a turn are not supported".into());
            }
        }
        Ok(())
    }
}

/// A single vine modeled as an upright box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plant {
    pub position: Point2<f64>,
    /// Direction of the row at the plant, rad.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VineRow {
    /// Signed lateral offset from the reference path (left positive), m.
    pub offset: f64,
    /// Nominal row curve sampled every [`VineRow::CENTERLINE_STEP`] m.
    pub centerline: Vec<Point2<f64>>,
    pub plants: Vec<Plant>,
    pub canopy_height: f64,
    pub canopy_halfwidth: f64,
}

impl VineRow {
    pub const CENTERLINE_STEP: f64 = 0.25;
}

/// Parallel (straight) or concentric (curved) rows around a reference path
/// that starts at the origin heading along +x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct World {
    pub params: WorldParams,
    /// Signed curvature of the reference path, 1/m (positive turns left).
    pub curvature: f64,
    pub rows: Vec<VineRow>,
    /// Indices of the two rows enclosing the driven lane.
    pub target_pair: (usize, usize),
    pub seed: u64,
}

/// Reference path point and left normal at arc length `s`.
fn reference_frame(curvature: f64, s: f64) -> (Point2<f64>, Vector2<f64>) {
    if curvature == 0.0 {
        return (Point2::new(s, 0.0), Vector2::new(0.0, 1.0));
    }
    let phi = curvature * s;
    let p = Point2::new(phi.sin() / curvature, (1.0 - phi.cos()) / curvature);
    (p, Vector2::new(-phi.sin(), phi.cos()))
}

fn sample_disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    if radius <= 0.0 {
        return (0.0, 0.0);
    }
    loop {
        let a: f64 = rng.gen_range(-1.0..=1.0);
        let b: f64 = rng.gen_range(-1.0..=1.0);
        if a * a + b * b <= 1.0 {
            return (a * radius, b * radius);
        }
    }
}

pub fn generate_world(params: &WorldParams, seed: u64) -> Result<World, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curvature = match params.layout {
        Layout::Straight => 0.0,
        Layout::Curved => {
            let [lo, hi] = params.curve_radius;
            let radius = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let sign = match params.curve_direction {
                CurveDirection::Left => 1.0,
                CurveDirection::Right => -1.0,
                CurveDirection::Random => {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            sign / radius
        }
    };

    let n = params.n_rows;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let offset = (k as f64 - (n as f64 - 1.0) / 2.0) * params.inter_row;
        // Arc length of the offset curve per unit of reference arc length.
        let stretch = 1.0 - curvature * offset;
        let own_length = params.row_length * stretch;

        let steps = (params.row_length / VineRow::CENTERLINE_STEP).ceil() as usize;
        let centerline = (0..=steps)
            .map(|i| {
                let s = (i as f64 * VineRow::CENTERLINE_STEP).min(params.row_length);
                let (p, n) = reference_frame(curvature, s);
                p + n * offset
            })
            .collect();

        let count = (own_length / params.plant_spacing).floor() as usize + 1;
        let plants = (0..count)
            .map(|i| {
                let (along, across) = sample_disc(&mut rng, params.jitter);
                let s = ((i as f64 * params.plant_spacing + along) / stretch).clamp(0.0, params.row_length);
                let (p, n) = reference_frame(curvature, s);
                Plant { position: p + n * (offset + across), heading: curvature * s }
            })
            .collect();

        rows.push(VineRow {
            offset,
            centerline,
            plants,
            canopy_height: params.canopy_height,
            canopy_halfwidth: params.canopy_halfwidth,
        });
    }

    Ok(World { params: params.clone(), curvature, rows, target_pair: (n / 2 - 1, n / 2), seed })
}

impl World {
    /// Lateral offset of the lane center between the target rows.
    pub fn lane_offset(&self) -> f64 {
        (self.rows[self.target_pair.0].offset + self.rows[self.target_pair.1].offset) / 2.0
    }

    /// Arc length along the reference path and signed lateral offset of `p`.
    pub fn project(&self, p: Point2<f64>) -> (f64, f64) {
        let k = self.curvature;
        if k == 0.0 {
            return (p.x, p.y);
        }
        let rx = p.x;
        let ry = p.y - 1.0 / k;
        let phi = (k * rx).atan2(-k * ry);
        let lateral = (1.0 - k.abs() * (rx * rx + ry * ry).sqrt()) / k;
        (phi / k, lateral)
    }

    pub fn point_at(&self, s: f64, lateral: f64) -> Point2<f64> {
        let (p, n) = reference_frame(self.curvature, s);
        p + n * lateral
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.curvature * s
    }

    /// Pose at arc length `s`, offset `lateral`, rotated `heading_offset`
    /// from the path direction.
    pub fn pose_at(&self, s: f64, lateral: f64, heading_offset: f64) -> Pose2D {
        let p = self.point_at(s, lateral);
        Pose2D::new(p.x, p.y, self.heading_at(s) + heading_offset)
    }

    /// Distance from `p` to the nominal centerline of row `row`.
    pub fn distance_to_row(&self, row: usize, p: Point2<f64>) -> f64 {
        let (s, lateral) = self.project(p);
        let offset = self.rows[row].offset;
        if (0.0..=self.params.row_length).contains(&s) {
            (lateral - offset).abs()
        } else {
            let end = if s < 0.0 { 0.0 } else { self.params.row_length };
            (self.point_at(end, offset) - p).norm()
        }
    }

    pub fn in_canopy(&self, p: Point2<f64>) -> bool {
        (0..self.rows.len()).any(|r| self.distance_to_row(r, p) < self.rows[r].canopy_halfwidth)
    }

    /// Left/right mirror image about the reference path.
    pub fn mirrored(&self) -> World {
        // The reference path under -curvature is the reflection across the x axis.
        let mirror = |p: Point2<f64>| Point2::new(p.x, -p.y);
        let rows: Vec<VineRow> = self
            .rows
            .iter()
            .rev()
            .map(|row| VineRow {
                offset: -row.offset,
                centerline: row.centerline.iter().map(|&p| mirror(p)).collect(),
                plants: row
                    .plants
                    .iter()
                    .map(|pl| Plant { position: mirror(pl.position), heading: -pl.heading })
                    .collect(),
                canopy_height: row.canopy_height,
                canopy_halfwidth: row.canopy_halfwidth,
            })
            .collect();
        let n = rows.len();
        let mut params = self.params.clone();
        params.curve_direction = match params.curve_direction {
            CurveDirection::Left => CurveDirection::Right,
            CurveDirection::Right => CurveDirection::Left,
            CurveDirection::Random => CurveDirection::Random,
        };
        World {
            params,
            curvature: -self.curvature,
            rows,
            target_pair: (n - 1 - self.target_pair.1, n - 1 - self.target_pair.0),
            seed: self.seed,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> World {
        let shift = Vector2::new(dx, dy);
        let mut out = self.clone();
        for row in &mut out.rows {
            row.centerline.iter_mut().for_each(|p| *p += shift);
            row.plants.iter_mut().for_each(|pl| pl.position += shift);
        }
        out
    }

    /// Axis-aligned bounds of all plants, padded by the canopy half width.
    pub fn bounds(&self) -> (Point2<f64>, Point2<f64>) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for row in &self.rows {
            for p in row.centerline.iter().chain(row.plants.iter().map(|pl| &pl.position)) {
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
        }
        let pad = self.params.canopy_halfwidth;
        (lo - Vector2::new(pad, pad), hi + Vector2::new(pad, pad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_rows_are_parallel_lines() {
        let world = generate_world(&WorldParams { jitter: 0.0, ..Default::default() }, 3).unwrap();
        assert_eq!(world.curvature, 0.0);
        for pair in world.rows.windows(2) {
            for (a, b) in pair[0].centerline.iter().zip(&pair[1].centerline) {
                assert!((b.y - a.y - 1.8).abs() < 1e-12);
                assert!((b.x - a.x).abs() < 1e-12);
            }
        }
        assert_eq!(world.lane_offset(), 0.0);
        assert_eq!(world.target_pair, (1, 2));
    }

    #[test]
    fn curved_rows_keep_spacing() {
        let params = WorldParams {
            layout: Layout::Curved,
            curve_radius: [30.0, 30.0],
            curve_direction: CurveDirection::Left,
            row_length: 30.0,
            ..Default::default()
        };
        let world = generate_world(&params, 1).unwrap();
        assert!((world.curvature - 1.0 / 30.0).abs() < 1e-15);
        let center = Point2::new(0.0, 30.0);
        for row in &world.rows {
            for p in &row.centerline {
                let radius = (p - center).norm();
                assert!((radius - (30.0 - row.offset)).abs() < 1e-9);
            }
        }
        for k in 0..world.rows.len() - 1 {
            for p in &world.rows[k].centerline {
                let spacing = world.distance_to_row(k + 1, *p);
                assert!((spacing - 1.8).abs() <= 0.05 * 1.8);
            }
        }
    }

    #[test]
    fn same_seed_same_world() {
        let params = WorldParams { layout: Layout::Curved, ..Default::default() };
        assert_eq!(generate_world(&params, 11).unwrap(), generate_world(&params, 11).unwrap());
        assert_ne!(generate_world(&params, 11).unwrap(), generate_world(&params, 12).unwrap());
    }

    #[test]
    fn jitter_is_bounded() {
        let params = WorldParams { layout: Layout::Curved, ..Default::default() };
        let world = generate_world(&params, 5).unwrap();
        for row in &world.rows {
            for plant in &row.plants {
                let (_, lateral) = world.project(plant.position);
                assert!((lateral - row.offset).abs() <= 0.05 + 1e-9);
            }
        }
    }

    #[test]
    fn projection_round_trip() {
        for curvature in [0.0, 1.0 / 25.0, -1.0 / 33.0] {
            let world = World { curvature, ..generate_world(&WorldParams::default(), 0).unwrap() };
            for (s, l) in [(0.0, 0.0), (12.5, 0.4), (29.0, -2.1)] {
                let (s2, l2) = world.project(world.point_at(s, l));
                assert!((s - s2).abs() < 1e-9 && (l - l2).abs() < 1e-9, "{curvature} {s} {l}");
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        for params in [
            WorldParams { inter_row: 1.5, ..Default::default() },
            WorldParams { plant_spacing: 1.2, ..Default::default() },
            WorldParams { n_rows: 1, ..Default::default() },
            WorldParams { jitter: 0.1, ..Default::default() },
            WorldParams { layout: Layout::Curved, curve_radius: [2.0, 3.0], ..Default::default() },
        ] {
            assert!(generate_world(&params, 0).is_err(), "{params:?}");
        }
    }

    #[test]
    fn canopy_detection() {
        let world = generate_world(&WorldParams::default(), 0).unwrap();
        assert!(world.in_canopy(Point2::new(5.0, 0.9)));
        assert!(!world.in_canopy(Point2::new(5.0, 0.0)));
        assert!(!world.in_canopy(Point2::new(5.0, 0.6)));
    }

    #[test]
    fn mirror_is_involution() {
        let params = WorldParams { layout: Layout::Curved, ..Default::default() };
        let world = generate_world(&params, 2).unwrap();
        let back = world.mirrored().mirrored();
        for (a, b) in world.rows.iter().zip(&back.rows) {
            for (p, q) in a.plants.iter().zip(&b.plants) {
                assert!((p.position - q.position).norm() < 1e-9);
            }
        }
        assert_eq!(back.target_pair, world.target_pair);
    }
}
