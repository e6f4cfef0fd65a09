use nalgebra::{Matrix4, Point2, Vector4};
use serde::Serialize;

use super::EvalError;
use crate::simworld::World;

/// Cubic in a normalized variable `t = (u - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cubic {
    /// Coefficients of 1, t, t², t³.
    pub coeffs: [f64; 4],
    pub offset: f64,
    pub scale: f64,
}

impl Cubic {
    pub fn eval(&self, u: f64) -> f64 {
        let t = (u - self.offset) / self.scale;
        let [c0, c1, c2, c3] = self.coeffs;
        ((c3 * t + c2) * t + c1) * t + c0
    }

    /// Coefficients of 1, u, u², u³ in the original variable.
    pub fn raw_coefficients(&self) -> [f64; 4] {
        // Expand sum c_k ((u - o) / s)^k binomially.
        let (o, s) = (self.offset, self.scale);
        let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
        let mut raw = [0.0; 4];
        for (k, &c) in self.coeffs.iter().enumerate() {
            let scaled = c / s.powi(k as i32);
            for j in 0..=k {
                raw[j] += scaled * binom[k][j] * (-o).powi((k - j) as i32);
            }
        }
        raw
    }

    /// Least-squares fit of `values` over `params`.
    pub fn fit(params: &[f64], values: &[f64]) -> Result<Self, EvalError> {
        if params.len() < 4 || params.len() != values.len() {
            return Err(EvalError::Degenerate(format!("cubic fit needs >= 4 samples, got {}", params.len())));
        }
        let (lo, hi) = params.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)));
        let offset = (lo + hi) / 2.0;
        let scale = (hi - lo) / 2.0;
        if scale <= 0.0 {
            return Err(EvalError::Degenerate("cubic fit over a single parameter value".into()));
        }
        let mut gram = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for (&u, &v) in params.iter().zip(values) {
            let t = (u - offset) / scale;
            let basis = Vector4::new(1.0, t, t * t, t * t * t);
            gram += basis * basis.transpose();
            rhs += basis * v;
        }
        let sol = gram.lu().solve(&rhs).ok_or_else(|| EvalError::Degenerate("singular cubic fit".into()))?;
        Ok(Self { coeffs: [sol[0], sol[1], sol[2], sol[3]], offset, scale })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum MidlineCurve {
    /// y as a function of x.
    Graph { y: Cubic },
    /// x and y as functions of chord length along the midpoints.
    Parametric { x: Cubic, y: Cubic },
}

/// Ground-truth lane center between the two target rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Midline {
    pub curve: MidlineCurve,
    /// Parameter range covered by the fitted midpoints.
    pub domain: (f64, f64),
    /// Midpoints the cubic was fitted through.
    pub midpoints: Vec<Point2<f64>>,
    /// Largest distance from a midpoint to the fitted curve, m.
    pub max_residual: f64,
}

/// Parameter step of the dense nearest-point search, m.
const SEARCH_STEP: f64 = 0.01;
/// Parameter corrections applied to parametric fits.
const REPARAM_ROUNDS: usize = 8;
/// Reprojection may move end midpoints slightly past the current domain.
const REPARAM_MARGIN: f64 = 1.0;

impl Midline {
    pub fn point(&self, u: f64) -> Point2<f64> {
        match &self.curve {
            MidlineCurve::Graph { y } => Point2::new(u, y.eval(u)),
            MidlineCurve::Parametric { x, y } => Point2::new(x.eval(u), y.eval(u)),
        }
    }

    /// Dense samples of the curve for repeated distance queries.
    pub fn sampler(&self) -> MidlineSampler<'_> {
        self.sampler_over(self.domain)
    }

    fn extended_sampler(&self) -> MidlineSampler<'_> {
        let (lo, hi) = self.domain;
        self.sampler_over((lo - REPARAM_MARGIN, hi + REPARAM_MARGIN))
    }

    fn sampler_over(&self, (lo, hi): (f64, f64)) -> MidlineSampler<'_> {
        let n = ((hi - lo) / SEARCH_STEP).ceil().max(1.0) as usize;
        let params: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let points = params.iter().map(|&u| self.point(u)).collect();
        MidlineSampler { midline: self, params, points }
    }

    pub fn distance(&self, p: Point2<f64>) -> f64 {
        self.sampler().distance(p)
    }
}

pub struct MidlineSampler<'a> {
    midline: &'a Midline,
    params: Vec<f64>,
    points: Vec<Point2<f64>>,
}

impl MidlineSampler<'_> {
    /// Distance from `p` to the curve restricted to its domain.
    pub fn distance(&self, p: Point2<f64>) -> f64 {
        self.nearest(p).1
    }

    /// Curve parameter of the point nearest to `p`, and the distance to it.
    pub fn nearest(&self, p: Point2<f64>) -> (f64, f64) {
        let (best, _) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("sampler has at least two points");
        let lo = self.params[best.saturating_sub(1)];
        let hi = self.params[(best + 1).min(self.params.len() - 1)];
        let dist = |u: f64| (self.midline.point(u) - p).norm();
        // Golden-section refinement inside the bracketing samples.
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (dist(c), dist(d));
        while b - a > 1e-7 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = dist(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = dist(d);
            }
        }
        let sampled = (self.params[best], dist(self.params[best]));
        [(c, fc), (d, fd), sampled]
            .into_iter()
            .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }
}

fn nearest_on_polyline(points: &[Point2<f64>], p: Point2<f64>) -> Point2<f64> {
    if points.len() == 1 {
        return points[0];
    }
    points
        .windows(2)
        .map(|seg| {
            let (a, b) = (seg[0], seg[1]);
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            a + ab * t
        })
        .min_by(|x, y| (x - p).norm_squared().total_cmp(&(y - p).norm_squared()))
        .expect("polyline has a segment")
}

/// Midpoints between each plant of the first target row and the nearest
/// point on the second target row, fitted with a cubic.
pub fn compute_midline(world: &World) -> Result<Midline, EvalError> {
    let (ia, ib) = world.target_pair;
    let row_a: Vec<Point2<f64>> = world.rows[ia].plants.iter().map(|p| p.position).collect();
    let row_b: Vec<Point2<f64>> = world.rows[ib].plants.iter().map(|p| p.position).collect();
    if row_a.len() < 4 || row_b.is_empty() {
        return Err(EvalError::Degenerate("target rows have too few plants".into()));
    }
    let mut midpoints = Vec::with_capacity(row_a.len());
    for &a in &row_a {
        let b = nearest_on_polyline(&row_b, a);
        if (b - a).norm() < 1e-6 {
            return Err(EvalError::Degenerate("target rows intersect".into()));
        }
        midpoints.push(Point2::from((a.coords + b.coords) / 2.0));
    }

    let (curve, domain) = if world.curvature == 0.0 {
        let xs: Vec<f64> = midpoints.iter().map(|m| m.x).collect();
        let ys: Vec<f64> = midpoints.iter().map(|m| m.y).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (MidlineCurve::Graph { y: Cubic::fit(&xs, &ys)? }, (lo, hi))
    } else {
        let mut chord = Vec::with_capacity(midpoints.len());
        let mut acc = 0.0;
        for (i, m) in midpoints.iter().enumerate() {
            if i > 0 {
                acc += (m - midpoints[i - 1]).norm();
            }
            chord.push(acc);
        }
        let xs: Vec<f64> = midpoints.iter().map(|m| m.x).collect();
        let ys: Vec<f64> = midpoints.iter().map(|m| m.y).collect();
        let fit = |params: &[f64]| -> Result<(MidlineCurve, (f64, f64)), EvalError> {
            let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((MidlineCurve::Parametric { x: Cubic::fit(params, &xs)?, y: Cubic::fit(params, &ys)? }, (lo, hi)))
        };
        // Chord length is only a first guess at each midpoint's parameter;
        // re-projecting onto the current fit and refitting removes most of
        // the parametrization error on long arcs.
        let mut params = chord;
        let mut best = fit(&params)?;
        for _ in 0..REPARAM_ROUNDS {
            let candidate = Midline { curve: best.0.clone(), domain: best.1, midpoints: Vec::new(), max_residual: 0.0 };
            let sampler = candidate.extended_sampler();
            params = midpoints.iter().map(|&m| sampler.nearest(m).0).collect();
            best = fit(&params)?;
        }
        best
    };

    let mut midline = Midline { curve, domain, midpoints, max_residual: 0.0 };
    let sampler = midline.sampler();
    let residual = midline.midpoints.iter().map(|&m| sampler.distance(m)).fold(0.0, f64::max);
    midline.max_residual = residual;
    Ok(midline)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_fit_recovers_polynomial() {
        let us: Vec<f64> = (0..20).map(|i| 3.0 + i as f64 * 0.7).collect();
        let f = |u: f64| 0.5 - 0.2 * u + 0.03 * u * u - 0.001 * u * u * u;
        let vs: Vec<f64> = us.iter().map(|&u| f(u)).collect();
        let cubic = Cubic::fit(&us, &vs).unwrap();
        for &u in &us {
            assert!((cubic.eval(u) - f(u)).abs() < 1e-10);
        }
        let raw = cubic.raw_coefficients();
        for (got, want) in raw.iter().zip([0.5, -0.2, 0.03, -0.001]) {
            assert!((got - want).abs() < 1e-9, "{raw:?}");
        }
    }

    #[test]
    fn cubic_fit_needs_samples() {
        assert!(Cubic::fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).is_err());
        assert!(Cubic::fit(&[1.0; 5], &[0.0; 5]).is_err());
    }

    #[test]
    fn polyline_projection() {
        let line = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 2.0)];
        assert_eq!(nearest_on_polyline(&line, Point2::new(1.0, 1.0)), Point2::new(1.0, 0.0));
        assert_eq!(nearest_on_polyline(&line, Point2::new(3.0, 1.5)), Point2::new(2.0, 1.5));
        assert_eq!(nearest_on_polyline(&line, Point2::new(-1.0, -1.0)), Point2::new(0.0, 0.0));
    }

    #[test]
    fn distance_to_straight_graph() {
        let midline = Midline {
            curve: MidlineCurve::Graph { y: Cubic { coeffs: [0.9, 0.0, 0.0, 0.0], offset: 5.0, scale: 5.0 } },
            domain: (0.0, 10.0),
            midpoints: vec![],
            max_residual: 0.0,
        };
        assert!((midline.distance(Point2::new(3.33, 1.0)) - 0.1).abs() < 1e-9);
        assert!((midline.distance(Point2::new(12.0, 0.9)) - 2.0).abs() < 1e-9);
    }
}
