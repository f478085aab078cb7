//! Path length post-processing.
//!
//! Interior waypoints of a joint-space path are moved to minimize
//!
//! ```text
//! ½ Σᵢ [ α·‖xᵢ₊₁ − xᵢ‖² + ‖ᵢpᵢ₊₁‖² ]
//! ```
//!
//! where `xᵢ` is the end-effector position at waypoint `i` and `ᵢpᵢ₊₁` the
//! rotation vector (log map) of the relative end-effector rotation between
//! consecutive waypoints, subject to every interior waypoint keeping at least
//! `d_obs` clearance. Gradients of both terms and of the clearance
//! constraints are analytic.

mod qp;
mod sqp;

use nalgebra::{DVector, Matrix3, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ee_jacobian, EePose, SerialChain};
use crate::planner::JointPath;
use crate::so3::{inv_exp_jacobian, log_map, quat_relative, RotationVector};
use crate::ssv::{ClearanceMode, CollisionWorld, DistanceMeter};

pub use sqp::optimize;

/// How objective and constraint derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GradientMode {
    Analytic,
    /// Forward differences of the full objective and constraint vector.
    ForwardDifference {
        step: f64,
    },
}

/// Which objective is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Translation plus rotation, balanced by `alpha`.
    Combined,
    /// End-effector translation only.
    TranslationOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlppParams {
    /// Clearance margin in meters.
    pub d_obs: f64,
    pub alpha: f64,
    /// Relative change of the objective below which the solver stops.
    pub eps_rel: f64,
    pub max_iterations: usize,
    /// Tolerance on the scaled constraints `d/d_obs − 1 ≥ 0`.
    pub feas_tol: f64,
    pub restoration_iterations: usize,
    /// Largest joint change per waypoint and iteration (rad).
    pub max_step: f64,
    pub gradients: GradientMode,
    pub objective: Objective,
}

impl Default for PlppParams {
    fn default() -> Self {
        Self {
            d_obs: 0.01,
            alpha: 5.0,
            eps_rel: 1e-3,
            max_iterations: 100,
            feas_tol: 1e-6,
            restoration_iterations: 10,
            max_step: 0.3,
            gradients: GradientMode::Analytic,
            objective: Objective::Combined,
        }
    }
}

/// Outcome details of one optimization run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlppReport {
    pub iterations: usize,
    /// Scaled objective at the input path (1 by construction).
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Unscaled combined path length of the input and output.
    pub initial_length: f64,
    pub final_length: f64,
    /// Largest violation of the scaled clearance constraints at the output.
    pub max_violation: f64,
    pub wall_time: f64,
    /// The input violated the clearance margin and restoration ran.
    pub restored: bool,
    /// Restoration failed; the input path was returned unchanged.
    pub infeasible_start: bool,
    /// ℓ₁ merit value after every accepted step.
    pub merit_history: Vec<f64>,
}

/// Which arms a problem optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One arm; clearance ignores the other arm.
    Single(usize),
    /// Both arms as one composite configuration; full clearance.
    Composite,
}

impl Layout {
    pub fn clearance_mode(self) -> ClearanceMode {
        match self {
            Layout::Single(a) => ClearanceMode::SingleArm(a),
            Layout::Composite => ClearanceMode::Full,
        }
    }
}

/// Rotation vector from `from` to `to`, shortest arc.
pub fn relative_rotation(from: &EePose, to: &EePose) -> RotationVector {
    // Both quaternions come from rotation matrices and are unit.
    log_map(&quat_relative(&from.u, &to.u).expect("unit quaternions from kinematics"))
}

/// Translational and rotational halves of the path length:
/// `(½Σ‖Δx‖², ½Σ‖p‖²)`.
pub fn path_length_terms(poses: &[EePose]) -> (f64, f64) {
    let mut trans = 0.0;
    let mut rot = 0.0;
    for w in poses.windows(2) {
        trans += 0.5 * (w[1].x - w[0].x).norm_squared();
        rot += 0.5 * relative_rotation(&w[0], &w[1]).norm_squared();
    }
    (trans, rot)
}

/// Combined translational and rotational end-effector path length of a
/// joint-space path for one chain.
pub fn combined_path_length(chain: &SerialChain, waypoints: &[Vec<f64>], alpha: f64) -> Result<f64> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidInput("path length needs at least two waypoints".into()));
    }
    let poses = waypoints.iter().map(|q| chain.forward_kinematics(q).map(|s| s.ee)).collect::<Result<Vec<_>>>()?;
    let (t, r) = path_length_terms(&poses);
    Ok(alpha * t + r)
}

/// Total rotational path length `½Σ‖p‖²` of a path for one chain.
pub fn rotational_path_length(chain: &SerialChain, waypoints: &[Vec<f64>]) -> Result<f64> {
    let poses = waypoints.iter().map(|q| chain.forward_kinematics(q).map(|s| s.ee)).collect::<Result<Vec<_>>>()?;
    Ok(path_length_terms(&poses).1)
}

/// Per-arm kinematic data at every waypoint.
struct ArmEval {
    poses: Vec<EePose>,
    /// Jacobians at interior waypoints (index 0 = waypoint 1).
    jacobians: Vec<(Matrix3xX<f64>, Matrix3xX<f64>)>,
}

/// Constrained path-length problem over the interior waypoints of a path.
pub struct PlppProblem<'a> {
    pub world: &'a CollisionWorld,
    pub layout: Layout,
    pub params: PlppParams,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Number of interior waypoints.
    pub n_free: usize,
    /// Normalizer of the objective; the unscaled value at the input path.
    pub scale: f64,
    meter: &'a DistanceMeter,
}

/// Objective and constraint values with optional derivatives.
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Option<DVector<f64>>,
    /// Scaled clearance constraints, one per interior waypoint.
    pub constraints: Vec<f64>,
    /// Gradient of constraint `i` with respect to waypoint `i`'s joints only.
    pub constraint_rows: Option<Vec<DVector<f64>>>,
}

impl<'a> PlppProblem<'a> {
    /// Sets up the problem for `path`; the objective scale is the unscaled
    /// objective of `path` itself.
    pub fn new(
        world: &'a CollisionWorld,
        layout: Layout,
        params: PlppParams,
        path: &JointPath,
        meter: &'a DistanceMeter,
    ) -> Result<Self> {
        if path.len() < 3 {
            return Err(Error::InvalidInput("PLPP needs at least one interior waypoint".into()));
        }
        if !(params.d_obs > 0.0) {
            return Err(Error::InvalidInput("d_obs must be positive".into()));
        }
        let dof = world.dof(layout.clearance_mode());
        if path.waypoints.iter().any(|w| w.len() != dof) {
            return Err(Error::InvalidInput(format!("waypoints must have {dof} joints")));
        }
        let mut problem = Self {
            world,
            layout,
            params,
            start: path.waypoints[0].clone(),
            goal: path.waypoints[path.len() - 1].clone(),
            n_free: path.len() - 2,
            scale: 1.0,
            meter,
        };
        let raw = problem.unscaled_objective(&problem.pack(path))?;
        problem.scale = if raw > 1e-12 { raw } else { 1.0 };
        Ok(problem)
    }

    pub fn dof(&self) -> usize {
        self.start.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_free * self.dof()
    }

    /// Interior waypoints as one flat, waypoint-major vector.
    pub fn pack(&self, path: &JointPath) -> DVector<f64> {
        DVector::from_iterator(self.n_vars(), path.waypoints[1..path.len() - 1].iter().flat_map(|w| w.iter().copied()))
    }

    pub fn unpack(&self, z: &DVector<f64>) -> JointPath {
        let dof = self.dof();
        let mut w = Vec::with_capacity(self.n_free + 2);
        w.push(self.start.clone());
        for i in 0..self.n_free {
            w.push(z.rows(i * dof, dof).iter().copied().collect());
        }
        w.push(self.goal.clone());
        JointPath::new(w)
    }

    fn waypoint<'z>(&'z self, z: &'z DVector<f64>, i: usize) -> &'z [f64] {
        let dof = self.dof();
        if i == 0 {
            &self.start
        } else if i == self.n_free + 1 {
            &self.goal
        } else {
            &z.as_slice()[(i - 1) * dof..i * dof]
        }
    }

    /// `(arm index, offset into a waypoint's joints)` for each optimized arm.
    fn arms(&self) -> Vec<(usize, usize)> {
        match self.layout {
            Layout::Single(a) => vec![(a, 0)],
            Layout::Composite => vec![(0, 0), (1, self.world.arms.left.n_dof())],
        }
    }

    fn arm_eval(&self, z: &DVector<f64>, arm: usize, offset: usize, jacobians: bool) -> Result<ArmEval> {
        let chain = self.world.arms.arm(arm);
        let n = chain.n_dof();
        let mut poses = Vec::with_capacity(self.n_free + 2);
        let mut jacs = Vec::new();
        for i in 0..self.n_free + 2 {
            let q = &self.waypoint(z, i)[offset..offset + n];
            let state = chain.forward_kinematics(q)?;
            if jacobians && i > 0 && i <= self.n_free {
                jacs.push(ee_jacobian(chain, &state));
            }
            poses.push(state.ee);
        }
        Ok(ArmEval { poses, jacobians: jacs })
    }

    fn weight(&self) -> f64 {
        match self.params.objective {
            Objective::Combined => self.params.alpha,
            Objective::TranslationOnly => 1.0,
        }
    }

    fn arm_objective(&self, eval: &ArmEval) -> f64 {
        let (t, r) = path_length_terms(&eval.poses);
        match self.params.objective {
            Objective::Combined => self.params.alpha * t + r,
            Objective::TranslationOnly => t,
        }
    }

    /// Objective before scaling.
    pub fn unscaled_objective(&self, z: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (arm, offset) in self.arms() {
            total += self.arm_objective(&self.arm_eval(z, arm, offset, false)?);
        }
        Ok(total)
    }

    /// Analytic gradient contribution of one arm, written into `grad`.
    fn arm_gradient(&self, eval: &ArmEval, offset: usize, grad: &mut DVector<f64>) -> Result<()> {
        let dof = self.dof();
        let w = self.weight();
        let rotation = self.params.objective == Objective::Combined;
        let rel: Vec<RotationVector> = if rotation {
            eval.poses.windows(2).map(|p| relative_rotation(&p[0], &p[1])).collect()
        } else {
            Vec::new()
        };
        for i in 1..=self.n_free {
            let (jt, jr) = &eval.jacobians[i - 1];
            let x = &eval.poses;
            let dx: Vector3<f64> = (x[i].x * 2.0 - x[i - 1].x - x[i + 1].x) * w;
            let mut g = jt.tr_mul(&dx);
            if rotation {
                // Left segment: rotation from waypoint i−1 to i.
                let p_left = rel[i - 1];
                let left: Matrix3<f64> = inv_exp_jacobian(&p_left)? * x[i - 1].rotation.transpose();
                g += jr.tr_mul(&(left.transpose() * p_left));
                // Right segment: rotation from waypoint i to i+1.
                let p_right = rel[i];
                let right: Matrix3<f64> = inv_exp_jacobian(&(-p_right))? * x[i + 1].rotation.transpose();
                g -= jr.tr_mul(&(right.transpose() * p_right));
            }
            let base = (i - 1) * dof + offset;
            let mut seg = grad.rows_mut(base, g.len());
            seg += g;
        }
        Ok(())
    }

    /// Scaled clearance constraints, optionally with per-waypoint gradients.
    fn constraints(&self, z: &DVector<f64>, with_rows: bool) -> Result<(Vec<f64>, Option<Vec<DVector<f64>>>)> {
        let mode = self.layout.clearance_mode();
        let d_obs = self.params.d_obs;
        let mut values = Vec::with_capacity(self.n_free);
        let mut rows = with_rows.then(|| Vec::with_capacity(self.n_free));
        for i in 1..=self.n_free {
            let q = self.waypoint(z, i);
            if let Some(rows) = rows.as_mut() {
                let (c, g) = self.world.clearance_gradient(q, mode, self.meter)?;
                values.push(c.distance() / d_obs - 1.0);
                rows.push(g / d_obs);
            } else {
                let c = self.world.min_clearance(q, mode, self.meter)?;
                values.push(c.distance() / d_obs - 1.0);
            }
        }
        Ok((values, rows))
    }

    /// Scaled objective and its analytic gradient.
    pub fn objective_and_gradient(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut grad = DVector::zeros(self.n_vars());
        let mut total = 0.0;
        for (arm, offset) in self.arms() {
            let eval = self.arm_eval(z, arm, offset, true)?;
            total += self.arm_objective(&eval);
            self.arm_gradient(&eval, offset, &mut grad)?;
        }
        Ok((total / self.scale, grad / self.scale))
    }

    /// Scaled clearance constraints `d(qᵢ)/d_obs − 1` and the Jacobian as
    /// dense rows over all variables.
    pub fn constraints_and_jacobian(&self, z: &DVector<f64>) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        let (values, rows) = self.constraints(z, true)?;
        let dof = self.dof();
        let dense = rows
            .expect("rows requested")
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut full = DVector::zeros(self.n_vars());
                full.rows_mut(i * dof, dof).copy_from(&r);
                full
            })
            .collect();
        Ok((values, dense))
    }

    /// Everything the solver needs at `z`, derivatives per `params.gradients`.
    pub fn evaluate(&self, z: &DVector<f64>, derivatives: bool) -> Result<Evaluation> {
        match (derivatives, self.params.gradients) {
            (false, _) => {
                let objective = self.unscaled_objective(z)? / self.scale;
                let (constraints, _) = self.constraints(z, false)?;
                Ok(Evaluation { objective, gradient: None, constraints, constraint_rows: None })
            }
            (true, GradientMode::Analytic) => {
                let (objective, gradient) = self.objective_and_gradient(z)?;
                let (constraints, rows) = self.constraints(z, true)?;
                Ok(Evaluation { objective, gradient: Some(gradient), constraints, constraint_rows: rows })
            }
            (true, GradientMode::ForwardDifference { step }) => self.forward_difference(z, step),
        }
    }

    /// Black-box forward differences: one full evaluation per variable.
    fn forward_difference(&self, z: &DVector<f64>, step: f64) -> Result<Evaluation> {
        let base = self.evaluate(z, false)?;
        let n = self.n_vars();
        let dof = self.dof();
        let mut gradient = DVector::zeros(n);
        let mut rows = vec![DVector::zeros(dof); self.n_free];
        let mut zp = z.clone();
        for k in 0..n {
            zp[k] = z[k] + step;
            let e = self.evaluate(&zp, false)?;
            zp[k] = z[k];
            gradient[k] = (e.objective - base.objective) / step;
            // Constraint i only depends on waypoint i; the rest of the
            // column is zero up to rounding.
            let i = k / dof;
            rows[i][k % dof] = (e.constraints[i] - base.constraints[i]) / step;
        }
        Ok(Evaluation {
            objective: base.objective,
            gradient: Some(gradient),
            constraints: base.constraints,
            constraint_rows: Some(rows),
        })
    }

    pub fn within_limits(&self, z: &DVector<f64>) -> bool {
        let (lower, upper) = match self.layout {
            Layout::Single(a) => (self.world.arms.arm(a).lower_limits(), self.world.arms.arm(a).upper_limits()),
            Layout::Composite => (self.world.arms.lower_limits(), self.world.arms.upper_limits()),
        };
        let dof = self.dof();
        z.iter().enumerate().all(|(k, v)| *v >= lower[k % dof] && *v <= upper[k % dof])
    }

    /// Unscaled combined path length (translation weighted by `alpha`, plus
    /// rotation), independent of the objective being optimized.
    pub fn combined_length(&self, path: &JointPath) -> Result<f64> {
        let mut total = 0.0;
        for (arm, offset) in self.arms() {
            let chain = self.world.arms.arm(arm);
            let wps: Vec<Vec<f64>> =
                path.waypoints.iter().map(|w| w[offset..offset + chain.n_dof()].to_vec()).collect();
            total += combined_path_length(chain, &wps, self.params.alpha)?;
        }
        Ok(total)
    }
}
