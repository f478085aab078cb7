//! End-to-end planning pipelines.
//!
//! Centralized: RRT-Connect in the composite 14-DoF space with full
//! clearance, shortcut simplification, optional path-length post-processing,
//! trajectory interpolation and a final sampled collision check.
//!
//! Decoupled: the same per-arm steps run concurrently with each arm ignoring
//! the other, followed by fixed-path coordination of the two trajectories
//! and the same final check on the coordinated execution.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coordination::{Coordination, CoordinationMap, CoordinationParams, CoordinationPath, Interpolation};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::planner::{densify, rrt_connect, simplify, JointPath, PlannerParams, StateSpace};
use crate::plpp::{optimize, Layout, PlppParams, PlppProblem, PlppReport};
use crate::plpp::{GradientMode, Objective};
use crate::ssv::{ClearanceMode, CollisionWorld, DistanceMeter};
use crate::trajectory::{interpolate, JointTrajectory, Limits};

/// Tunable parameters of both pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Per-arm validation step as a fraction of the joint-space extent. The
    /// centralized planner uses half of it.
    pub segment_fraction: f64,
    /// Planner wall-clock budget per query (s).
    pub max_planning_time: f64,
    pub max_planner_iterations: usize,
    pub extend_factor: f64,
    pub shortcut_attempts: usize,
    /// Clearance required of planned configurations (m).
    pub plan_margin: f64,
    pub d_obs: f64,
    pub alpha: f64,
    pub eps_rel: f64,
    pub sqp_max_iterations: usize,
    pub feas_tol: f64,
    pub restoration_iterations: usize,
    pub sqp_max_step: f64,
    pub min_waypoints: usize,
    pub coordination_fraction: f64,
    /// Robot-robot clearance required during coordination (m).
    pub coordination_margin: f64,
    pub coordination_max_time: f64,
    pub coordination_max_iterations: usize,
    pub interpolation: Interpolation,
    /// Sampling period of the final collision check (s).
    pub validation_dt: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segment_fraction: 0.001,
            max_planning_time: 5.0,
            max_planner_iterations: 20_000,
            extend_factor: 10.0,
            shortcut_attempts: 100,
            plan_margin: 0.02,
            d_obs: 0.02,
            alpha: 5.0,
            eps_rel: 1e-3,
            sqp_max_iterations: 100,
            feas_tol: 1e-6,
            restoration_iterations: 10,
            sqp_max_step: 0.3,
            min_waypoints: 20,
            coordination_fraction: 0.001,
            coordination_margin: 0.0,
            coordination_max_time: 5.0,
            coordination_max_iterations: 20_000,
            interpolation: Interpolation::Cubic,
            validation_dt: 1e-3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("segment_fraction", self.segment_fraction),
            ("max_planning_time", self.max_planning_time),
            ("extend_factor", self.extend_factor),
            ("d_obs", self.d_obs),
            ("alpha", self.alpha),
            ("eps_rel", self.eps_rel),
            ("feas_tol", self.feas_tol),
            ("sqp_max_step", self.sqp_max_step),
            ("coordination_fraction", self.coordination_fraction),
            ("coordination_max_time", self.coordination_max_time),
            ("validation_dt", self.validation_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("params.{name} must be positive, got {v}")));
            }
        }
        if self.segment_fraction >= 1.0 || self.coordination_fraction >= 1.0 {
            return Err(Error::InvalidInput("segment fractions must be below 1".into()));
        }
        if !(self.plan_margin >= 0.0) || !(self.coordination_margin >= 0.0) {
            return Err(Error::InvalidInput("margins must be non-negative".into()));
        }
        if self.max_planner_iterations == 0 || self.coordination_max_iterations == 0 || self.min_waypoints < 3 {
            return Err(Error::InvalidInput("iteration budgets must be positive and min_waypoints ≥ 3".into()));
        }
        Ok(())
    }

    pub fn planner_params(&self, fraction: f64, seed: u64) -> PlannerParams {
        PlannerParams {
            longest_valid_segment_fraction: fraction,
            max_time: self.max_planning_time,
            max_iterations: self.max_planner_iterations,
            seed,
            extend_factor: self.extend_factor,
            shortcut_attempts: self.shortcut_attempts,
        }
    }

    pub fn plpp_params(&self) -> PlppParams {
        PlppParams {
            d_obs: self.d_obs,
            alpha: self.alpha,
            eps_rel: self.eps_rel,
            max_iterations: self.sqp_max_iterations,
            feas_tol: self.feas_tol,
            restoration_iterations: self.restoration_iterations,
            max_step: self.sqp_max_step,
            gradients: GradientMode::Analytic,
            objective: Objective::Combined,
        }
    }

    pub fn coordination_params(&self, seed: u64) -> CoordinationParams {
        CoordinationParams {
            fraction: self.coordination_fraction,
            max_time: self.coordination_max_time,
            max_iterations: self.coordination_max_iterations,
            extend_factor: self.extend_factor,
            shortcut_attempts: self.shortcut_attempts,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Centralized,
    Decoupled,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Decoupled => "decoupled",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "decoupled" => Ok(Mode::Decoupled),
            other => Err(Error::InvalidInput(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    CollisionFailure,
    CoordinationFailure,
    PlanningFailure,
    InfeasibleStart,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Success,
        Outcome::CollisionFailure,
        Outcome::CoordinationFailure,
        Outcome::PlanningFailure,
        Outcome::InfeasibleStart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::CollisionFailure => "collision_failure",
            Outcome::CoordinationFailure => "coordination_failure",
            Outcome::PlanningFailure => "planning_failure",
            Outcome::InfeasibleStart => "infeasible_start",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MotionQuery {
    pub start: [Vec<f64>; 2],
    pub goal: [Vec<f64>; 2],
    pub use_plpp: bool,
    pub interpolation: Interpolation,
}

/// Wall-clock seconds per stage. For the decoupled pipeline the per-arm
/// stages are those of the arm that finished last.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub path_planner: f64,
    pub simplifier: f64,
    pub plpp: f64,
    pub trajectory: f64,
    pub coordination: f64,
    /// Everything up to a finished trajectory, excluding validation.
    pub motion_planning: f64,
    /// Time inside distance queries during motion planning.
    pub distance: f64,
    pub validation: f64,
}

impl StageTimes {
    fn arm_total(&self) -> f64 {
        self.path_planner + self.simplifier + self.plpp + self.trajectory
    }
}

/// How the final commands are produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Execution {
    /// One composite trajectory.
    Centralized(JointTrajectory),
    /// Two trajectories retimed by a coordination map.
    Decoupled { left: JointTrajectory, right: JointTrajectory, path: CoordinationPath, map: CoordinationMap },
}

impl Execution {
    pub fn duration(&self) -> f64 {
        match self {
            Execution::Centralized(t) => t.duration(),
            Execution::Decoupled { map, .. } => map.duration(),
        }
    }

    /// Composite configuration (left then right) at time `t`.
    pub fn configuration(&self, world: &CollisionWorld, t: f64) -> Vec<f64> {
        match self {
            Execution::Centralized(traj) => traj.eval(t).q,
            Execution::Decoupled { left, right, map, .. } => {
                let c = Coordination { world, left, right, margin: 0.0 };
                let [l, r] = c.eval(map, t);
                [l.q, r.q].concat()
            }
        }
    }

    /// Composite position, velocity and acceleration at time `t`.
    pub fn sample(&self, world: &CollisionWorld, t: f64) -> crate::trajectory::Sample {
        match self {
            Execution::Centralized(traj) => traj.eval(t),
            Execution::Decoupled { left, right, map, .. } => {
                let c = Coordination { world, left, right, margin: 0.0 };
                let [l, r] = c.eval(map, t);
                crate::trajectory::Sample {
                    q: [l.q, r.q].concat(),
                    qd: [l.qd, r.qd].concat(),
                    qdd: [l.qdd, r.qdd].concat(),
                }
            }
        }
    }
}

/// Everything one pipeline run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub mode: Mode,
    pub outcome: Outcome,
    pub seed: u64,
    /// Index of the retry instance that produced this result.
    pub attempt: usize,
    pub times: StageTimes,
    /// Duration of the executed motion (s); zero unless a trajectory exists.
    pub motion_duration: f64,
    /// Combined path length before and after post-processing, summed over
    /// both arms, when post-processing ran.
    pub original_length: Option<f64>,
    pub modified_length: Option<f64>,
    pub plpp: Vec<PlppReport>,
    /// Paths handed to and returned by the post-processor. Composite for the
    /// centralized pipeline, one per arm otherwise.
    pub plpp_input: Vec<JointPath>,
    pub plpp_output: Vec<JointPath>,
    /// Final geometric paths (composite or per arm).
    pub paths: Vec<JointPath>,
    pub execution: Option<Execution>,
    /// First sampled time in collision, for collision failures.
    pub collision_time: Option<f64>,
    pub warnings: Vec<String>,
    pub message: String,
}

impl PlanResult {
    fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            outcome: Outcome::Success,
            seed,
            attempt: 0,
            times: StageTimes::default(),
            motion_duration: 0.0,
            original_length: None,
            modified_length: None,
            plpp: Vec::new(),
            plpp_input: Vec::new(),
            plpp_output: Vec::new(),
            paths: Vec::new(),
            execution: None,
            collision_time: None,
            warnings: Vec::new(),
            message: String::new(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Result of the per-arm (or composite) geometric stages.
struct PathStages {
    path: JointPath,
    trajectory: JointTrajectory,
    times: StageTimes,
    plpp: Option<(JointPath, JointPath, PlppReport)>,
}

enum StageFailure {
    Planning(String),
    InfeasibleStart(PlppReport, JointPath),
}

/// Samples the execution every `dt` (and at its end) and returns the first
/// time whose full-mode clearance is negative.
pub fn validate_execution(
    world: &CollisionWorld,
    execution: &Execution,
    dt: f64,
    meter: &DistanceMeter,
) -> Option<f64> {
    let duration = execution.duration();
    let n = (duration / dt).ceil() as usize;
    (0..=n)
        .map(|k| (k as f64 * dt).min(duration))
        .find(|&t| !world.is_clear(&execution.configuration(world, t), ClearanceMode::Full, 0.0, meter))
}

/// Both pipelines over one world and configuration.
pub struct Pipeline<'a> {
    pub world: &'a CollisionWorld,
    pub config: &'a PipelineConfig,
    pub exec: Exec,
}

impl<'a> Pipeline<'a> {
    pub fn new(world: &'a CollisionWorld, config: &'a PipelineConfig) -> Self {
        Self { world, config, exec: Exec::default() }
    }

    /// Start and goal must be within limits and keep the planning margin.
    pub fn check_query(&self, query: &MotionQuery) -> Result<(Vec<f64>, Vec<f64>)> {
        let arms = &self.world.arms;
        let start = arms.join(&query.start[0], &query.start[1])?;
        let goal = arms.join(&query.goal[0], &query.goal[1])?;
        let meter = DistanceMeter::new();
        for (label, q) in [("start", &start), ("goal", &goal)] {
            if !arms.within_limits(q) {
                return Err(Error::Precondition(format!("{label} outside joint limits")));
            }
            if !self.world.is_clear(q, ClearanceMode::Full, self.config.plan_margin, &meter) {
                return Err(Error::Precondition(format!(
                    "{label} closer than {} m to collision",
                    self.config.plan_margin
                )));
            }
        }
        Ok((start, goal))
    }

    pub fn plan(&self, query: &MotionQuery, mode: Mode, seed: u64) -> Result<PlanResult> {
        match mode {
            Mode::Centralized => self.plan_centralized(query, seed),
            Mode::Decoupled => self.plan_decoupled(query, seed),
        }
    }

    /// Plan, simplify, optionally post-process, and time-parameterize one
    /// path in the space described by `layout`.
    #[allow(clippy::too_many_arguments)]
    fn path_stages(
        &self,
        layout: Layout,
        start: &[f64],
        goal: &[f64],
        fraction: f64,
        use_plpp: bool,
        seed: u64,
        meter: &DistanceMeter,
    ) -> std::result::Result<PathStages, StageFailure> {
        let mode = layout.clearance_mode();
        let (lower, upper, limits) = match layout {
            Layout::Single(a) => {
                let c = self.world.arms.arm(a);
                (
                    c.lower_limits(),
                    c.upper_limits(),
                    Limits { velocity: c.velocity_limits(), acceleration: c.acceleration_limits() },
                )
            }
            Layout::Composite => {
                let d = &self.world.arms;
                (
                    d.lower_limits(),
                    d.upper_limits(),
                    Limits { velocity: d.velocity_limits(), acceleration: d.acceleration_limits() },
                )
            }
        };
        let margin = self.config.plan_margin;
        let world = self.world;
        let space = StateSpace::new(lower, upper, fraction, move |q| world.is_clear(q, mode, margin, meter))
            .map_err(|e| StageFailure::Planning(e.to_string()))?;
        let params: PlannerParams = self.config.planner_params(fraction, seed);
        let mut times = StageTimes::default();

        let clock = Instant::now();
        let raw = match rrt_connect(&space, start, goal, &params) {
            Ok(p) => p,
            Err(e) => return Err(StageFailure::Planning(e.to_string())),
        };
        times.path_planner = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut path = simplify(&space, &raw, &params);
        times.simplifier = clock.elapsed().as_secs_f64();

        let mut plpp = None;
        if use_plpp {
            let clock = Instant::now();
            let dense = densify(&path, self.config.min_waypoints);
            let problem = PlppProblem::new(self.world, layout, self.config.plpp_params(), &dense, meter)
                .map_err(|e| StageFailure::Planning(e.to_string()))?;
            let (optimized, report) = optimize(&problem, &dense).map_err(|e| StageFailure::Planning(e.to_string()))?;
            times.plpp = clock.elapsed().as_secs_f64();
            if report.infeasible_start {
                return Err(StageFailure::InfeasibleStart(report, dense));
            }
            let clock = Instant::now();
            path = simplify(&space, &optimized, &self.config.planner_params(fraction, seed.wrapping_add(1)));
            times.simplifier += clock.elapsed().as_secs_f64();
            plpp = Some((dense, optimized, report));
        }

        let clock = Instant::now();
        let trajectory = interpolate(&path, &limits).map_err(|e| StageFailure::Planning(e.to_string()))?;
        times.trajectory = clock.elapsed().as_secs_f64();
        Ok(PathStages { path, trajectory, times, plpp })
    }

    fn fail_stage(result: &mut PlanResult, failure: StageFailure) {
        match failure {
            StageFailure::Planning(msg) => {
                result.outcome = Outcome::PlanningFailure;
                result.message = msg;
            }
            StageFailure::InfeasibleStart(report, path) => {
                result.outcome = Outcome::InfeasibleStart;
                result.message = format!("clearance violation {:.3e} could not be repaired", report.max_violation);
                result.plpp_input.push(path);
                result.plpp.push(report);
            }
        }
    }

    /// Plans both arms as one composite robot.
    pub fn plan_centralized(&self, query: &MotionQuery, seed: u64) -> Result<PlanResult> {
        let (start, goal) = self.check_query(query)?;
        let meter = DistanceMeter::new();
        let mut result = PlanResult::new(Mode::Centralized, seed);
        let clock = Instant::now();
        let stages = self.path_stages(
            Layout::Composite,
            &start,
            &goal,
            0.5 * self.config.segment_fraction,
            query.use_plpp,
            seed,
            &meter,
        );
        result.times.motion_planning = clock.elapsed().as_secs_f64();
        result.times.distance = meter.reading().seconds;
        let stages = match stages {
            Ok(s) => s,
            Err(f) => {
                Self::fail_stage(&mut result, f);
                return Ok(result);
            }
        };
        let mt = result.times.motion_planning;
        result.times = StageTimes { motion_planning: mt, distance: result.times.distance, ..stages.times };
        if let Some((input, output, report)) = stages.plpp {
            result.original_length = Some(report.initial_length);
            result.modified_length = Some(report.final_length);
            result.plpp_input.push(input);
            result.plpp_output.push(output);
            result.plpp.push(report);
        }
        result.paths.push(stages.path);
        self.finish(&mut result, Execution::Centralized(stages.trajectory));
        Ok(result)
    }

    /// Plans each arm on its own, concurrently, then coordinates.
    pub fn plan_decoupled(&self, query: &MotionQuery, seed: u64) -> Result<PlanResult> {
        self.check_query(query)?;
        let mut result = PlanResult::new(Mode::Decoupled, seed);
        let clock = Instant::now();
        let meters = [DistanceMeter::new(), DistanceMeter::new()];
        let arm = |k: usize| {
            self.path_stages(
                Layout::Single(k),
                &query.start[k],
                &query.goal[k],
                self.config.segment_fraction,
                query.use_plpp,
                arm_seed(seed, k),
                &meters[k],
            )
        };
        let (left, right) = par::join(self.exec, || arm(0), || arm(1));
        let (left, right) = match (left, right) {
            (Ok(l), Ok(r)) => (l, r),
            (l, r) => {
                result.times.motion_planning = clock.elapsed().as_secs_f64();
                let (k, failure) = match (l, r) {
                    (Err(f), _) => (0, f),
                    (_, Err(f)) => (1, f),
                    _ => unreachable!(),
                };
                result.times.distance = meters[k].reading().seconds;
                Self::fail_stage(&mut result, failure);
                result.message = format!("{} arm: {}", ARM_NAMES[k], result.message);
                return Ok(result);
            }
        };
        // Per-arm stage times come from the arm with the larger total.
        let critical = if left.times.arm_total() >= right.times.arm_total() { 0 } else { 1 };
        result.times = [&left, &right][critical].times;
        let mut distance = meters[critical].reading().seconds;
        for stages in [&left, &right] {
            if let Some((input, output, report)) = &stages.plpp {
                *result.original_length.get_or_insert(0.0) += report.initial_length;
                *result.modified_length.get_or_insert(0.0) += report.final_length;
                result.plpp_input.push(input.clone());
                result.plpp_output.push(output.clone());
                result.plpp.push(report.clone());
            }
            result.paths.push(stages.path.clone());
        }

        let coordination = Coordination {
            world: self.world,
            left: &left.trajectory,
            right: &right.trajectory,
            margin: self.config.coordination_margin,
        };
        let coord_meter = DistanceMeter::new();
        let coord_clock = Instant::now();
        let planned =
            coordination.plan(&self.config.coordination_params(arm_seed(seed, 2)), &coord_meter).and_then(|path| {
                let map = CoordinationMap::build(&path, coordination.durations(), query.interpolation)?;
                Ok((path, map))
            });
        result.times.coordination = coord_clock.elapsed().as_secs_f64();
        distance += coord_meter.reading().seconds;
        result.times.distance = distance;
        result.times.motion_planning = clock.elapsed().as_secs_f64();
        let (path, map) = match planned {
            Ok(v) => v,
            Err(e) => {
                result.outcome = Outcome::CoordinationFailure;
                result.message = e.to_string();
                return Ok(result);
            }
        };
        let limits = [0, 1].map(|k| {
            let c = self.world.arms.arm(k);
            Limits { velocity: c.velocity_limits(), acceleration: c.acceleration_limits() }
        });
        result.warnings = coordination.limit_warnings(&map, [&limits[0], &limits[1]], self.config.validation_dt);
        let execution = Execution::Decoupled { left: left.trajectory, right: right.trajectory, path, map };
        self.finish(&mut result, execution);
        Ok(result)
    }

    /// Runs the final sampled collision check and stores the execution.
    fn finish(&self, result: &mut PlanResult, execution: Execution) {
        let clock = Instant::now();
        let meter = DistanceMeter::new();
        result.collision_time = validate_execution(self.world, &execution, self.config.validation_dt, &meter);
        result.times.validation = clock.elapsed().as_secs_f64();
        result.motion_duration = execution.duration();
        if let Some(t) = result.collision_time {
            result.outcome = Outcome::CollisionFailure;
            result.message = format!("collision at t = {t:.3} s");
        }
        result.execution = Some(execution);
    }

    /// Runs `retries` independent instances with seeds `seed, seed + 1, …`
    /// concurrently and returns the lowest-index success, or the first
    /// instance's result if none succeeded.
    pub fn plan_with_retries(&self, query: &MotionQuery, mode: Mode, seed: u64, retries: usize) -> Result<PlanResult> {
        if retries == 0 {
            return Err(Error::InvalidInput("retries must be at least 1".into()));
        }
        self.check_query(query)?;
        let inner = Pipeline { exec: if retries > 1 { Exec::Sequential } else { self.exec }, ..*self };
        let results = par::map_range(self.exec, retries, |i| inner.plan(query, mode, seed.wrapping_add(i as u64)));
        let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;
        for (i, r) in results.iter_mut().enumerate() {
            r.attempt = i;
        }
        let pick = results.iter().position(PlanResult::succeeded).unwrap_or(0);
        Ok(results.swap_remove(pick))
    }
}

const ARM_NAMES: [&str; 2] = ["left", "right"];

/// Seed of an independent sub-stream (arm planners, coordination).
pub fn arm_seed(seed: u64, stream: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream as u64 + 1)
}

impl From<&crate::scenario::NamedQuery> for MotionQuery {
    fn from(q: &crate::scenario::NamedQuery) -> Self {
        MotionQuery {
            start: q.start.clone(),
            goal: q.goal.clone(),
            use_plpp: true,
            interpolation: Interpolation::default(),
        }
    }
}
