//! Fixed-path coordination of two independently timed trajectories.
//!
//! The coordination space holds pairs of local trajectory times `(ˡτ, ʳτ)`.
//! A pair is valid when the two arms, each at its own trajectory time, keep
//! the required robot-robot clearance. A path through this space from
//! `(0, 0)` to `(ˡT, ʳT)` is planned with the same planner as joint space,
//! then mapped to real time by a continuous `c(t)`. Coordinated commands
//! follow from the chain rule:
//!
//! ```text
//! q(t)  = q(c(t))
//! q̇(t)  = q′(c)·ċ
//! q̈(t)  = q″(c)·ċ² + q′(c)·c̈
//! ```
//!
//! Paths may run backwards in either local time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::planner::{rrt_connect, simplify, JointPath, PlannerParams, StateSpace};
use crate::ssv::{ClearanceMode, CollisionWorld, DistanceMeter};
use crate::trajectory::{zero_clamped_spline, Coeffs, JointTrajectory, PiecewisePolynomial, Sample};

/// How the coordination map interpolates its waypoints over real time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
    Quintic,
}

impl Interpolation {
    pub const ALL: [Interpolation; 3] = [Interpolation::Linear, Interpolation::Cubic, Interpolation::Quintic];

    pub fn name(self) -> &'static str {
        match self {
            Interpolation::Linear => "linear",
            Interpolation::Cubic => "cubic",
            Interpolation::Quintic => "quintic",
        }
    }
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "cubic" => Ok(Interpolation::Cubic),
            "quintic" => Ok(Interpolation::Quintic),
            other => Err(Error::InvalidInput(format!("unknown interpolation '{other}'"))),
        }
    }
}

/// The pair of trajectories being coordinated plus the collision model.
#[derive(Clone, Copy)]
pub struct Coordination<'a> {
    pub world: &'a CollisionWorld,
    pub left: &'a JointTrajectory,
    pub right: &'a JointTrajectory,
    /// Required robot-robot clearance (m).
    pub margin: f64,
}

/// Waypoints `(ˡτ, ʳτ)` from `(0, 0)` to `(ˡT, ʳT)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationPath {
    pub waypoints: Vec<[f64; 2]>,
}

impl CoordinationPath {
    /// Number of interior waypoints where the direction changes.
    pub fn bends(&self) -> usize {
        self.waypoints
            .windows(3)
            .filter(|w| {
                let a = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
                let b = [w[2][0] - w[1][0], w[2][1] - w[1][1]];
                (a[0] * b[1] - a[1] * b[0]).abs() > 1e-12 * (1.0 + a[0].abs() + a[1].abs())
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationParams {
    /// Validation step as a fraction of `ˡT + ʳT`.
    pub fraction: f64,
    pub max_time: f64,
    pub max_iterations: usize,
    pub extend_factor: f64,
    pub shortcut_attempts: usize,
    pub seed: u64,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        Self {
            fraction: 0.001,
            max_time: 5.0,
            max_iterations: 20_000,
            extend_factor: 10.0,
            shortcut_attempts: 100,
            seed: 0,
        }
    }
}

impl<'a> Coordination<'a> {
    pub fn durations(&self) -> [f64; 2] {
        [self.left.duration(), self.right.duration()]
    }

    /// Composite configuration with each arm at its own trajectory time.
    pub fn configuration(&self, tau: [f64; 2]) -> Vec<f64> {
        let mut q = self.left.eval(tau[0]).q;
        q.extend(self.right.eval(tau[1]).q);
        q
    }

    /// Whether the arms keep the margin at local times `tau`.
    pub fn valid(&self, tau: [f64; 2], meter: &DistanceMeter) -> Result<bool> {
        let t = self.durations();
        if (0..2).any(|k| !(tau[k] >= 0.0 && tau[k] <= t[k])) {
            return Err(Error::InvalidInput(format!("coordination state {tau:?} outside [0, {t:?}]")));
        }
        Ok(self.world.is_clear(&self.configuration(tau), ClearanceMode::RobotRobotOnly, self.margin, meter))
    }

    /// Plans a collision-free coordination path. A budget overrun means no
    /// path exists in practice and is reported as
    /// [`Error::PlanningFailure`]; invalid corners as
    /// [`Error::Precondition`].
    pub fn plan(&self, params: &CoordinationParams, meter: &DistanceMeter) -> Result<CoordinationPath> {
        let t = self.durations();
        let start = [0.0, 0.0];
        for corner in [start, t] {
            if !self.valid(corner, meter)? {
                return Err(Error::Precondition(format!("coordination corner {corner:?} in collision")));
            }
        }
        // Dimensions with zero duration are held fixed.
        let active: Vec<usize> = (0..2).filter(|&k| t[k] > 0.0).collect();
        if active.is_empty() {
            return Ok(CoordinationPath { waypoints: vec![start] });
        }
        let extent: f64 = t.iter().sum();
        let upper: Vec<f64> = active.iter().map(|&k| t[k]).collect();
        let lift = move |x: &[f64]| {
            let mut tau = [0.0; 2];
            for (i, &k) in active.iter().enumerate() {
                tau[k] = x[i];
            }
            tau
        };
        let lift_v = lift.clone();
        // The space extent is ˡT + ʳT even when one dimension is fixed.
        let fraction = params.fraction * extent / upper.iter().sum::<f64>();
        let space = StateSpace::new(vec![0.0; upper.len()], upper.clone(), fraction, move |x| {
            self.world.is_clear(&self.configuration(lift_v(x)), ClearanceMode::RobotRobotOnly, self.margin, meter)
        })?;
        let planner = PlannerParams {
            longest_valid_segment_fraction: fraction,
            max_time: params.max_time,
            max_iterations: params.max_iterations,
            seed: params.seed,
            extend_factor: params.extend_factor,
            shortcut_attempts: params.shortcut_attempts,
        };
        let raw = rrt_connect(&space, &vec![0.0; upper.len()], &upper, &planner)?;
        let simple = simplify(&space, &raw, &planner);
        Ok(CoordinationPath { waypoints: simple.waypoints.iter().map(|x| lift(x)).collect() })
    }

    /// Validity grid with `⌈ˡT/res⌉ + 1` rows (left time) and
    /// `⌈ʳT/res⌉ + 1` columns (right time); cell `(i, j)` is evaluated at
    /// `(min(i·res, ˡT), min(j·res, ʳT))`.
    pub fn rasterize(&self, resolution: f64, exec: Exec, meter: &DistanceMeter) -> Result<Diagram> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidInput("diagram resolution must be positive".into()));
        }
        let t = self.durations();
        let rows = (t[0] / resolution).ceil() as usize + 1;
        let cols = (t[1] / resolution).ceil() as usize + 1;
        let right: Vec<Vec<f64>> = (0..cols).map(|j| self.right.eval((j as f64 * resolution).min(t[1])).q).collect();
        let grid = par::map_range(exec, rows, |i| {
            let ql = self.left.eval((i as f64 * resolution).min(t[0])).q;
            let mut q = ql.clone();
            right
                .iter()
                .map(|qr| {
                    q.truncate(ql.len());
                    q.extend_from_slice(qr);
                    self.world.is_clear(&q, ClearanceMode::RobotRobotOnly, self.margin, meter)
                })
                .collect::<Vec<bool>>()
        });
        Ok(Diagram { rows, cols, resolution, durations: t, free: grid.concat() })
    }

    /// Coordinated position, velocity and acceleration of both arms at real
    /// time `t`.
    pub fn eval(&self, map: &CoordinationMap, t: f64) -> [Sample; 2] {
        let c = map.eval(t);
        let out = |traj: &JointTrajectory, k: usize| {
            let s = traj.eval(c.q[k]);
            let (cd, cdd) = (c.qd[k], c.qdd[k]);
            Sample {
                qd: s.qd.iter().map(|v| v * cd).collect(),
                qdd: s.qdd.iter().zip(&s.qd).map(|(a, v)| a * cd * cd + v * cdd).collect(),
                q: s.q,
            }
        };
        [out(self.left, 0), out(self.right, 1)]
    }

    /// Samples coordinated commands every `dt` and reports each joint whose
    /// velocity or acceleration limit is exceeded, with the worst ratio.
    pub fn limit_warnings(
        &self,
        map: &CoordinationMap,
        limits: [&crate::trajectory::Limits; 2],
        dt: f64,
    ) -> Vec<String> {
        let n = (map.duration() / dt).ceil() as usize;
        let mut worst: Vec<Vec<(f64, f64)>> = limits.iter().map(|l| vec![(0.0, 0.0); l.velocity.len()]).collect();
        for k in 0..=n {
            let s = self.eval(map, (k as f64 * dt).min(map.duration()));
            for arm in 0..2 {
                for j in 0..s[arm].q.len() {
                    let w = &mut worst[arm][j];
                    w.0 = w.0.max(s[arm].qd[j].abs() / limits[arm].velocity[j]);
                    w.1 = w.1.max(s[arm].qdd[j].abs() / limits[arm].acceleration[j]);
                }
            }
        }
        let mut out = Vec::new();
        for (arm, joints) in worst.iter().enumerate() {
            for (j, (v, a)) in joints.iter().enumerate() {
                if *v > 1.0 + 1e-9 {
                    out.push(format!("arm {arm} joint {}: velocity at {:.3}× limit", j + 1, v));
                }
                if *a > 1.0 + 1e-9 {
                    out.push(format!("arm {arm} joint {}: acceleration at {:.3}× limit", j + 1, a));
                }
            }
        }
        out
    }
}

/// Rasterized coordination space.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub rows: usize,
    pub cols: usize,
    pub resolution: f64,
    pub durations: [f64; 2],
    /// Row-major, `free[i·cols + j]`.
    pub free: Vec<bool>,
}

impl Diagram {
    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.free[i * self.cols + j]
    }

    /// Binary 8-bit PGM: 0 = collision, 255 = free. Image x is the left
    /// time, image y the right time with `ʳτ = 0` at the bottom.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!(
            "P5\n# resolution {} s, durations {} s {} s\n{} {}\n255\n",
            self.resolution, self.durations[0], self.durations[1], self.rows, self.cols
        )
        .into_bytes();
        for j in (0..self.cols).rev() {
            for i in 0..self.rows {
                out.push(if self.is_free(i, j) { 255 } else { 0 });
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("left_tau,right_tau,free\n");
        for i in 0..self.rows {
            for j in 0..self.cols {
                let tl = (i as f64 * self.resolution).min(self.durations[0]);
                let tr = (j as f64 * self.resolution).min(self.durations[1]);
                out.push_str(&format!("{tl},{tr},{}\n", u8::from(self.is_free(i, j))));
            }
        }
        out
    }
}

/// Real time to coordination space, `c(t) = (ˡc(t), ʳc(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationMap {
    pub mode: Interpolation,
    pub poly: PiecewisePolynomial,
    /// Upper bounds `(ˡT, ʳT)`; values are clamped into `[0, T]`.
    pub bounds: [f64; 2],
}

impl CoordinationMap {
    /// Assigns knot times with rate at most one per component, fits the
    /// requested interpolation and rescales time if the fit exceeds rate one.
    pub fn build(path: &CoordinationPath, bounds: [f64; 2], mode: Interpolation) -> Result<Self> {
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(path.waypoints.len());
        for w in &path.waypoints {
            if points.last() != Some(w) {
                points.push(*w);
            }
        }
        if points.is_empty() {
            return Err(Error::InvalidInput("empty coordination path".into()));
        }
        if points.len() == 1 {
            return Ok(Self { mode, poly: PiecewisePolynomial::constant(points[0].to_vec()), bounds });
        }
        let mut times = vec![0.0];
        for w in points.windows(2) {
            let h = (w[1][0] - w[0][0]).abs().max((w[1][1] - w[0][1]).abs());
            times.push(times[times.len() - 1] + h);
        }
        let poly = match mode {
            Interpolation::Linear => {
                let segments = points
                    .windows(2)
                    .zip(times.windows(2))
                    .map(|(p, t)| {
                        let h = t[1] - t[0];
                        (0..2).map(|k| [p[0][k], (p[1][k] - p[0][k]) / h, 0.0, 0.0, 0.0, 0.0]).collect()
                    })
                    .collect();
                PiecewisePolynomial::new(times, segments)?
            }
            Interpolation::Cubic => {
                let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
                let mut poly = zero_clamped_spline(&times, &pts)?;
                let (v, _) = poly.cubic_extrema();
                let rate = v.iter().fold(0.0_f64, |m, x| m.max(*x));
                if rate > 1.0 {
                    poly.scale_time(rate * (1.0 + 1e-12));
                }
                poly
            }
            Interpolation::Quintic => {
                // Minimum-jerk blend per segment; peak rate 15/8 of the mean.
                let stretch = 15.0 / 8.0;
                let times: Vec<f64> = times.iter().map(|t| t * stretch).collect();
                let segments = points
                    .windows(2)
                    .zip(times.windows(2))
                    .map(|(p, t)| {
                        let h = t[1] - t[0];
                        (0..2)
                            .map(|k| {
                                let d = p[1][k] - p[0][k];
                                let c: Coeffs = [
                                    p[0][k],
                                    0.0,
                                    0.0,
                                    10.0 * d / h.powi(3),
                                    -15.0 * d / h.powi(4),
                                    6.0 * d / h.powi(5),
                                ];
                                c
                            })
                            .collect()
                    })
                    .collect();
                PiecewisePolynomial::new(times, segments)?
            }
        };
        Ok(Self { mode, poly, bounds })
    }

    pub fn duration(&self) -> f64 {
        self.poly.duration()
    }

    /// `c`, `ċ`, `c̈` at `t`; components outside their bounds are clipped
    /// with zero derivatives.
    pub fn eval(&self, t: f64) -> Sample {
        let mut s = self.poly.eval(t);
        for k in 0..2 {
            if s.q[k] < 0.0 || s.q[k] > self.bounds[k] {
                s.q[k] = s.q[k].clamp(0.0, self.bounds[k]);
                s.qd[k] = 0.0;
                s.qdd[k] = 0.0;
            }
        }
        s
    }

    /// Largest excursion of the unclipped map outside its bounds, sampled
    /// every `dt`.
    pub fn overshoot(&self, dt: f64) -> f64 {
        let n = (self.duration() / dt).ceil() as usize;
        let mut worst = 0.0_f64;
        for k in 0..=n {
            let q = self.poly.eval((k as f64 * dt).min(self.duration())).q;
            for j in 0..2 {
                worst = worst.max(-q[j]).max(q[j] - self.bounds[j]);
            }
        }
        worst
    }
}

/// Straight-line path through the coordination space, as used when the arms
/// never interfere.
pub fn diagonal(bounds: [f64; 2]) -> CoordinationPath {
    CoordinationPath { waypoints: vec![[0.0, 0.0], bounds] }
}

impl From<&CoordinationPath> for JointPath {
    fn from(p: &CoordinationPath) -> Self {
        JointPath::new(p.waypoints.iter().map(|w| w.to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(points: &[[f64; 2]]) -> CoordinationPath {
        CoordinationPath { waypoints: points.to_vec() }
    }

    #[test]
    fn linear_diagonal_runs_at_rate_one() {
        let m = CoordinationMap::build(&diagonal([2.0, 3.0]), [2.0, 3.0], Interpolation::Linear).unwrap();
        assert_eq!(m.duration(), 3.0);
        let s = m.eval(1.5);
        assert!((s.q[0] - 1.0).abs() < 1e-15 && (s.q[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn every_mode_hits_both_corners_with_rate_at_most_one() {
        let p = path(&[[0.0, 0.0], [1.0, 0.2], [0.8, 1.5], [2.0, 2.0]]);
        for mode in Interpolation::ALL {
            let m = CoordinationMap::build(&p, [2.0, 2.0], mode).unwrap();
            let end = m.eval(m.duration()).q;
            assert!(m.eval(0.0).q.iter().all(|v| v.abs() < 1e-10));
            assert!((end[0] - 2.0).abs() < 1e-10 && (end[1] - 2.0).abs() < 1e-10, "{mode:?}");
            let n = (m.duration() / 1e-3) as usize;
            for k in 0..=n {
                let s = m.eval(k as f64 * 1e-3);
                assert!(s.qd.iter().all(|v| v.abs() <= 1.0 + 1e-9), "{mode:?} {s:?}");
            }
            assert!(m.duration() >= 2.0);
        }
    }

    #[test]
    fn bends_counted() {
        assert_eq!(path(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).bends(), 0);
        assert_eq!(path(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.5]]).bends(), 2);
    }

    #[test]
    fn pgm_header_and_size() {
        let d = Diagram { rows: 3, cols: 2, resolution: 0.5, durations: [1.0, 0.5], free: vec![true; 6] };
        let pgm = d.to_pgm();
        let text = String::from_utf8_lossy(&pgm);
        assert!(text.starts_with("P5\n# resolution 0.5"));
        assert!(text.contains("\n3 2\n255\n"));
        assert!(pgm.ends_with(&[255; 6]));
    }
}
