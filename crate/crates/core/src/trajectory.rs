//! Time parameterization of joint paths.
//!
//! A path is interpolated by a cubic spline with zero end velocities. One
//! auxiliary knot is inserted at 10% of the first and of the last segment;
//! their positions are chosen so the end accelerations vanish as well,
//! making the trajectory zero-clamped and C² everywhere. Knot times start out
//! proportional to the slowest joint's travel per segment and are then
//! scaled uniformly so that velocity and acceleration limits hold exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::JointPath;

/// Position of the auxiliary knots as a fraction of the end segments.
pub const AUX_FRACTION: f64 = 0.1;

/// Polynomial coefficients, lowest order first, up to quintic.
pub type Coeffs = [f64; 6];

fn poly_eval(c: &Coeffs, t: f64) -> (f64, f64, f64) {
    let q = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
    let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
    (q, v, a)
}

/// Vector-valued piecewise polynomial over increasing knot times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolynomial {
    knots: Vec<f64>,
    /// `segments[k][j]`: coefficients of dimension `j` on `[knots[k], knots[k+1]]`
    /// in the local time `t − knots[k]`.
    segments: Vec<Vec<Coeffs>>,
    /// Value used when there are no segments.
    constant: Vec<f64>,
}

/// Position, velocity and acceleration per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
}

impl PiecewisePolynomial {
    pub fn new(knots: Vec<f64>, segments: Vec<Vec<Coeffs>>) -> Result<Self> {
        if segments.is_empty() || knots.len() != segments.len() + 1 {
            return Err(Error::InvalidInput("need one more knot than segments".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("knot times must increase".into()));
        }
        let dim = segments[0].len();
        if segments.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidInput("segments disagree on dimension".into()));
        }
        let constant = segments[0].iter().map(|c| c[0]).collect();
        Ok(Self { knots, segments, constant })
    }

    /// Zero-duration polynomial holding `q`.
    pub fn constant(q: Vec<f64>) -> Self {
        Self { knots: vec![0.0], segments: Vec::new(), constant: q }
    }

    pub fn dim(&self) -> usize {
        self.constant.len()
    }

    pub fn duration(&self) -> f64 {
        self.knots[self.knots.len() - 1] - self.knots[0]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn segments(&self) -> &[Vec<Coeffs>] {
        &self.segments
    }

    /// Evaluates segment `k` at absolute time `t`, without clamping to the
    /// segment. Used for two-sided checks at knots.
    pub fn eval_segment(&self, k: usize, t: f64) -> Sample {
        let local = t - self.knots[k];
        let n = self.dim();
        let mut s = Sample { q: vec![0.0; n], qd: vec![0.0; n], qdd: vec![0.0; n] };
        for (j, c) in self.segments[k].iter().enumerate() {
            let (q, v, a) = poly_eval(c, local);
            s.q[j] = q;
            s.qd[j] = v;
            s.qdd[j] = a;
        }
        s
    }

    fn at_rest(&self, end: bool) -> Sample {
        let q = if self.segments.is_empty() {
            self.constant.clone()
        } else if end {
            let k = self.segments.len() - 1;
            self.eval_segment(k, self.knots[k + 1]).q
        } else {
            self.eval_segment(0, self.knots[0]).q
        };
        let n = q.len();
        Sample { q, qd: vec![0.0; n], qdd: vec![0.0; n] }
    }

    /// Value and derivatives at `t`. Outside the time range the end value is
    /// held with zero derivatives.
    pub fn eval(&self, t: f64) -> Sample {
        if self.segments.is_empty() || t < self.knots[0] {
            return self.at_rest(false);
        }
        if t > self.knots[self.knots.len() - 1] {
            return self.at_rest(true);
        }
        let k = self.knots.partition_point(|&x| x <= t).saturating_sub(1).min(self.segments.len() - 1);
        self.eval_segment(k, t)
    }

    /// Largest `|velocity|` and `|acceleration|` per dimension, computed from
    /// the polynomial extrema of each segment. Cubic segments only.
    pub fn cubic_extrema(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut vmax = vec![0.0_f64; n];
        let mut amax = vec![0.0_f64; n];
        for (k, seg) in self.segments.iter().enumerate() {
            let h = self.knots[k + 1] - self.knots[k];
            for (j, c) in seg.iter().enumerate() {
                debug_assert!(c[4] == 0.0 && c[5] == 0.0);
                let vel = |t: f64| c[1] + t * (2.0 * c[2] + 3.0 * c[3] * t);
                let mut v = vel(0.0).abs().max(vel(h).abs());
                if c[3] != 0.0 {
                    let t_star = -c[2] / (3.0 * c[3]);
                    if t_star > 0.0 && t_star < h {
                        v = v.max(vel(t_star).abs());
                    }
                }
                vmax[j] = vmax[j].max(v);
                let a = (2.0 * c[2]).abs().max((2.0 * c[2] + 6.0 * c[3] * h).abs());
                amax[j] = amax[j].max(a);
            }
        }
        (vmax, amax)
    }

    /// Stretches time by `factor` (> 1 slows down).
    pub fn scale_time(&mut self, factor: f64) {
        let t0 = self.knots[0];
        for t in &mut self.knots {
            *t = t0 + (*t - t0) * factor;
        }
        for seg in &mut self.segments {
            for c in seg.iter_mut() {
                let mut f = 1.0;
                for coeff in c.iter_mut().skip(1) {
                    f /= factor;
                    *coeff *= f;
                }
            }
        }
    }

    /// Largest absolute jerk over all segments and dimensions (diagnostic).
    pub fn max_jerk(&self) -> f64 {
        let mut best = 0.0_f64;
        for (k, seg) in self.segments.iter().enumerate() {
            let h = self.knots[k + 1] - self.knots[k];
            for c in seg {
                let jerk = |t: f64| 6.0 * c[3] + t * (24.0 * c[4] + 60.0 * c[5] * t);
                best = best.max(jerk(0.0).abs()).max(jerk(h).abs());
            }
        }
        best
    }
}

/// Clamped cubic spline (given end slopes) through `values` at `times`:
/// returns the second derivatives at the knots.
fn clamped_moments(times: &[f64], values: &[f64], slope0: f64, slope1: f64) -> Vec<f64> {
    let n = times.len();
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 2.0 * h[0];
    sup[0] = h[0];
    rhs[0] = 6.0 * ((values[1] - values[0]) / h[0] - slope0);
    for i in 1..n - 1 {
        sub[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
    }
    sub[n - 1] = h[n - 2];
    diag[n - 1] = 2.0 * h[n - 2];
    rhs[n - 1] = 6.0 * (slope1 - (values[n - 1] - values[n - 2]) / h[n - 2]);
    // Thomas algorithm; the system is strictly diagonally dominant.
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }
    m
}

fn cubic_coeffs(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> Coeffs {
    [y0, (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0, 0.5 * m0, (m1 - m0) / (6.0 * h), 0.0, 0.0]
}

/// Zero-clamped C² cubic spline through `points` at strictly increasing
/// `times`, with auxiliary knots near both ends. Needs at least two points.
pub fn zero_clamped_spline(times: &[f64], points: &[Vec<f64>]) -> Result<PiecewisePolynomial> {
    if times.len() != points.len() || times.len() < 2 {
        return Err(Error::InvalidInput("need at least two timed points".into()));
    }
    let m = times.len() - 1;
    let first_aux = times[0] + AUX_FRACTION * (times[1] - times[0]);
    let last_aux = times[m] - AUX_FRACTION * (times[m] - times[m - 1]);
    let mut knots = Vec::with_capacity(m + 3);
    knots.push(times[0]);
    knots.push(first_aux);
    knots.extend_from_slice(&times[1..m]);
    knots.push(last_aux);
    knots.push(times[m]);
    let count = knots.len();
    let dim = points[0].len();

    let mut per_dim = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut values = Vec::with_capacity(count);
        values.push(points[0][j]);
        values.push(0.0);
        values.extend(points[1..m].iter().map(|p| p[j]));
        values.push(0.0);
        values.push(points[m][j]);
        // End accelerations are affine in the two auxiliary values:
        // solve with both at zero and with each at one.
        let base = clamped_moments(&knots, &values, 0.0, 0.0);
        let mut unit_a = vec![0.0; count];
        unit_a[1] = 1.0;
        let ma = clamped_moments(&knots, &unit_a, 0.0, 0.0);
        let mut unit_b = vec![0.0; count];
        unit_b[count - 2] = 1.0;
        let mb = clamped_moments(&knots, &unit_b, 0.0, 0.0);
        // [ma0 mb0; maN mbN] [ya; yb] = −[base0; baseN]
        let (a11, a12, a21, a22) = (ma[0], mb[0], ma[count - 1], mb[count - 1]);
        let det = a11 * a22 - a12 * a21;
        if det.abs() < 1e-300 {
            return Err(Error::InvalidInput("degenerate auxiliary knot system".into()));
        }
        let (r1, r2) = (-base[0], -base[count - 1]);
        let ya = (r1 * a22 - a12 * r2) / det;
        let yb = (a11 * r2 - a21 * r1) / det;
        values[1] = ya;
        values[count - 2] = yb;
        let moments: Vec<f64> = (0..count).map(|i| base[i] + ya * ma[i] + yb * mb[i]).collect();
        per_dim.push((values, moments));
    }

    let segments = (0..count - 1)
        .map(|k| {
            let h = knots[k + 1] - knots[k];
            per_dim
                .iter()
                .map(|(y, mm)| {
                    let mut c = cubic_coeffs(y[k], y[k + 1], mm[k], mm[k + 1], h);
                    // Exact zero end conditions despite rounding.
                    if k == 0 {
                        c[1] = 0.0;
                        c[2] = 0.0;
                    }
                    c
                })
                .collect()
        })
        .collect();
    PiecewisePolynomial::new(knots, segments)
}

/// Per-joint velocity and acceleration bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

impl Limits {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.velocity.len() != dim || self.acceleration.len() != dim {
            return Err(Error::InvalidInput(format!("limits must have {dim} entries")));
        }
        if self.velocity.iter().chain(&self.acceleration).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("limits must be positive".into()));
        }
        Ok(())
    }
}

/// Zero-clamped C² joint trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub poly: PiecewisePolynomial,
    /// Times at which the trajectory passes the (deduplicated) waypoints.
    pub waypoint_times: Vec<f64>,
}

impl JointTrajectory {
    pub fn duration(&self) -> f64 {
        self.poly.duration()
    }

    pub fn dof(&self) -> usize {
        self.poly.dim()
    }

    /// Clamped evaluation: before 0 and after the duration the end
    /// configuration is returned with zero velocity and acceleration.
    pub fn eval(&self, t: f64) -> Sample {
        self.poly.eval(t)
    }

    pub fn max_jerk(&self) -> f64 {
        self.poly.max_jerk()
    }
}

/// Interpolates `path` with a zero-clamped spline that respects `limits`.
///
/// Consecutive duplicate waypoints are merged. A path whose waypoints are all
/// equal yields a zero-duration trajectory.
pub fn interpolate(path: &JointPath, limits: &Limits) -> Result<JointTrajectory> {
    if path.len() < 2 {
        return Err(Error::InvalidInput("trajectory needs at least two waypoints".into()));
    }
    let dim = path.waypoints[0].len();
    if path.waypoints.iter().any(|w| w.len() != dim) {
        return Err(Error::InvalidInput("waypoints disagree on dimension".into()));
    }
    limits.validate(dim)?;
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    for w in &path.waypoints {
        if points.last() != Some(w) {
            points.push(w.clone());
        }
    }
    if points.len() == 1 {
        return Ok(JointTrajectory {
            poly: PiecewisePolynomial::constant(points.pop().expect("one point")),
            waypoint_times: vec![0.0],
        });
    }
    let mut times = vec![0.0];
    for w in points.windows(2) {
        let h = (0..dim).map(|j| (w[1][j] - w[0][j]).abs() / limits.velocity[j]).fold(0.0, f64::max);
        times.push(times[times.len() - 1] + h);
    }
    let mut poly = zero_clamped_spline(&times, &points)?;
    let (v, a) = poly.cubic_extrema();
    let rv = (0..dim).map(|j| v[j] / limits.velocity[j]).fold(0.0, f64::max);
    let ra = (0..dim).map(|j| a[j] / limits.acceleration[j]).fold(0.0, f64::max);
    let factor = rv.max(ra.sqrt()) * (1.0 + 1e-9);
    poly.scale_time(factor);
    let waypoint_times = times.iter().map(|t| t * factor).collect();
    Ok(JointTrajectory { poly, waypoint_times })
}
