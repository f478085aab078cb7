//! Benchmark runs over a scenario's query cycle, aggregate statistics in the
//! layout of the comparison tables, and plot-ready artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coordination::{Coordination, CoordinationMap, Interpolation};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::pipeline::{arm_seed, Execution, Mode, MotionQuery, Outcome, Pipeline, PlanResult, StageTimes};
use crate::planner::{densify, rrt_connect, simplify, JointPath, StateSpace};
use crate::plpp::{optimize, GradientMode, Layout, PlppProblem};
use crate::scenario::Scenario;
use crate::ssv::{ClearanceMode, DistanceMeter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: Mode,
    pub cycles: usize,
    pub use_plpp: bool,
    pub retries: usize,
    pub seed: u64,
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::InvalidInput("cycles must be at least 1".into()));
        }
        if self.retries == 0 {
            return Err(Error::InvalidInput("retries must be at least 1".into()));
        }
        Ok(())
    }
}

/// Seed of query `index` in a run seeded with `seed` (splitmix64).
pub fn query_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One query of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: usize,
    pub cycle: usize,
    pub query: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub attempt: usize,
    pub times: StageTimes,
    pub motion_duration: f64,
    pub original_length: Option<f64>,
    pub modified_length: Option<f64>,
    pub plpp_iterations: usize,
    pub collision_time: Option<f64>,
    pub warnings: usize,
}

impl QueryRecord {
    fn new(index: usize, cycle: usize, query: &str, r: &PlanResult) -> Self {
        Self {
            index,
            cycle,
            query: query.to_string(),
            seed: r.seed,
            outcome: r.outcome,
            attempt: r.attempt,
            times: r.times,
            motion_duration: r.motion_duration,
            original_length: r.original_length,
            modified_length: r.modified_length,
            plpp_iterations: r.plpp.iter().map(|p| p.iterations).sum(),
            collision_time: r.collision_time,
            warnings: r.warnings.len(),
        }
    }

    /// Relative reduction of the combined path length, when post-processing ran.
    pub fn reduction(&self) -> Option<f64> {
        match (self.original_length, self.modified_length) {
            (Some(a), Some(b)) if a > 0.0 => Some(1.0 - b / a),
            _ => None,
        }
    }
}

/// Mean and sample standard deviation (n − 1; zero for a single sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Stat { mean, std, n })
    }
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Row {
    Metric { label: String, stat: Option<Stat> },
    Count { label: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub options: RunOptions,
    pub records: Vec<QueryRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchReport {
    pub fn count(&self, outcome: Outcome) -> usize {
        self.records.iter().filter(|r| r.outcome == outcome).count()
    }

    pub fn failure_counts(&self) -> BTreeMap<Outcome, usize> {
        Outcome::ALL.iter().map(|&o| (o, self.count(o))).collect()
    }

    pub fn failure_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        1.0 - self.count(Outcome::Success) as f64 / self.records.len() as f64
    }

    /// Mean relative path-length reduction over queries that ran the
    /// post-processor.
    pub fn mean_reduction(&self) -> Option<f64> {
        Stat::of(&self.records.iter().filter_map(QueryRecord::reduction).collect::<Vec<_>>()).map(|s| s.mean)
    }

    /// Aggregate rows. Stage times average over all queries; motion duration
    /// over queries that produced a trajectory; path lengths over queries
    /// that ran the post-processor.
    pub fn rows(&self) -> Vec<Row> {
        let all = |f: fn(&StageTimes) -> f64| Stat::of(&self.records.iter().map(|r| f(&r.times)).collect::<Vec<_>>());
        let metric = |label: &str, stat| Row::Metric { label: label.to_string(), stat };
        let mut rows = vec![
            metric("Path Planner Time [s]", all(|t| t.path_planner)),
            metric("Simplifier Time [s]", all(|t| t.simplifier)),
        ];
        if self.options.use_plpp {
            rows.push(metric("PLPP Time [s]", all(|t| t.plpp)));
        }
        rows.push(metric("Trajectory Planner Time [s]", all(|t| t.trajectory)));
        if self.options.mode == Mode::Decoupled {
            rows.push(metric("Coordination Time [s]", all(|t| t.coordination)));
        }
        rows.push(metric("Motion Planning Time [s]", all(|t| t.motion_planning)));
        rows.push(metric("Distance Computation Time [s]", all(|t| t.distance)));
        let durations: Vec<f64> = self
            .records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::Success | Outcome::CollisionFailure))
            .map(|r| r.motion_duration)
            .collect();
        rows.push(metric("Motion Duration [s]", Stat::of(&durations)));
        if self.options.use_plpp {
            let orig: Vec<f64> = self.records.iter().filter_map(|r| r.original_length).collect();
            let modi: Vec<f64> = self.records.iter().filter_map(|r| r.modified_length).collect();
            let red: Vec<f64> = self.records.iter().filter_map(|r| r.reduction().map(|v| 100.0 * v)).collect();
            rows.push(metric("Original Path Length", Stat::of(&orig)));
            rows.push(metric("Modified Path Length", Stat::of(&modi)));
            rows.push(metric("Path Length Reduction [%]", Stat::of(&red)));
        }
        for (label, outcome) in [
            ("Collision Failure", Outcome::CollisionFailure),
            ("Coordination Failure", Outcome::CoordinationFailure),
            ("Planning Failure", Outcome::PlanningFailure),
            ("Infeasible Start", Outcome::InfeasibleStart),
            ("Success", Outcome::Success),
        ] {
            rows.push(Row::Count { label: label.to_string(), count: self.count(outcome) });
        }
        rows
    }

    pub fn table_text(&self) -> String {
        let o = &self.options;
        let mut out = format!(
            "{} approach, {} PLPP, scenario {}, {} queries ({} cycles, {} attempts, seed {})\n",
            o.mode.name(),
            if o.use_plpp { "with" } else { "without" },
            self.scenario,
            self.records.len(),
            o.cycles,
            o.retries,
            o.seed
        );
        for row in self.rows() {
            match row {
                Row::Metric { label, stat: Some(s) } => {
                    let _ = writeln!(out, "{label:<32} {:>12.4} ± {:<10.4} (n = {})", s.mean, s.std, s.n);
                }
                Row::Metric { label, stat: None } => {
                    let _ = writeln!(out, "{label:<32} {:>12}", "n/a");
                }
                Row::Count { label, count } => {
                    let _ = writeln!(out, "{label:<32} {count:>12}");
                }
            }
        }
        out
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("row,mean,std,n,count\n");
        for row in self.rows() {
            match row {
                Row::Metric { label, stat: Some(s) } => {
                    let _ = writeln!(out, "{label},{},{},{},", s.mean, s.std, s.n);
                }
                Row::Metric { label, stat: None } => {
                    let _ = writeln!(out, "{label},,,0,");
                }
                Row::Count { label, count } => {
                    let _ = writeln!(out, "{label},,,,{count}");
                }
            }
        }
        out
    }

    /// Per-query results without wall-clock measurements, so identical runs
    /// produce identical bytes.
    pub fn queries_csv(&self) -> String {
        let mut out = String::from(
            "index,cycle,query,seed,outcome,attempt,motion_duration,original_length,modified_length,\
             plpp_iterations,collision_time,warnings\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.cycle,
                r.query,
                r.seed,
                r.outcome.name(),
                r.attempt,
                r.motion_duration,
                opt(r.original_length),
                opt(r.modified_length),
                r.plpp_iterations,
                opt(r.collision_time),
                r.warnings
            );
        }
        out
    }

    /// Per-query stage times (s).
    pub fn timings_csv(&self) -> String {
        let mut out = String::from(
            "index,query,path_planner,simplifier,plpp,trajectory,coordination,motion_planning,distance,validation\n",
        );
        for r in &self.records {
            let t = &r.times;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.query,
                t.path_planner,
                t.simplifier,
                t.plpp,
                t.trajectory,
                t.coordination,
                t.motion_planning,
                t.distance,
                t.validation
            );
        }
        out
    }
}

/// Everything a run produced.
pub struct RunOutput {
    pub report: BenchReport,
    pub results: Vec<PlanResult>,
}

/// Runs `cycles` passes over the scenario's query list, one query at a time.
pub fn run(scenario: &Scenario, options: &RunOptions, exec: Exec) -> Result<RunOutput> {
    options.validate()?;
    scenario.config.validate()?;
    let mut pipeline = Pipeline::new(&scenario.world, &scenario.config);
    pipeline.exec = exec;
    let mut records = Vec::new();
    let mut results = Vec::new();
    for cycle in 0..options.cycles {
        for q in &scenario.queries {
            let index = records.len();
            let query = MotionQuery {
                start: q.start.clone(),
                goal: q.goal.clone(),
                use_plpp: options.use_plpp,
                interpolation: scenario.config.interpolation,
            };
            let seed = query_seed(options.seed, index);
            let result = pipeline.plan_with_retries(&query, options.mode, seed, options.retries)?;
            records.push(QueryRecord::new(index, cycle, &q.name, &result));
            results.push(result);
        }
    }
    let report = BenchReport { scenario: scenario.name.clone(), options: options.clone(), records };
    Ok(RunOutput { report, results })
}

/// A single query result with the scenario it was planned in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub scenario_source: String,
    pub query: String,
    pub result: PlanResult,
}

impl ResultFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes the report tables and one result file per query into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, output: &RunOutput) -> Result<Vec<PathBuf>> {
    let results_dir = dir.join("results");
    fs::create_dir_all(&results_dir)?;
    let r = &output.report;
    let mut written = Vec::new();
    for (name, body) in [
        ("queries.csv", r.queries_csv()),
        ("timings.csv", r.timings_csv()),
        ("summary.csv", r.table_csv()),
        ("summary.txt", r.table_text()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    for (record, result) in r.records.iter().zip(&output.results) {
        let file = ResultFile {
            scenario_source: scenario.source.clone(),
            query: record.query.clone(),
            result: result.clone(),
        };
        let path = results_dir.join(format!("{:04}-{}.json", record.index, record.query));
        fs::write(&path, serde_json::to_string(&file)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Sampling period of exported profiles (s).
const PROFILE_DT: f64 = 1e-3;
/// Target number of diagram cells along the longer time axis.
const DIAGRAM_CELLS: f64 = 200.0;

/// Writes plot-ready files for one result: the coordination diagram and
/// time-scaling profiles (decoupled results with coordination), end-effector
/// waypoint traces before and after post-processing, and joint command
/// profiles of the final execution.
pub fn export_artifacts(file: &ResultFile, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::parse(&file.scenario_source)?;
    let world = &scenario.world;
    let result = &file.result;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: Vec<u8>| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    if let Some(Execution::Decoupled { left, right, path, .. }) = &result.execution {
        let c = Coordination { world, left, right, margin: scenario.config.coordination_margin };
        let durations = c.durations();
        let res = (durations[0].max(durations[1]) / DIAGRAM_CELLS).max(1e-6);
        let diagram = c.rasterize(res, Exec::default(), &DistanceMeter::new())?;
        put("diagram.pgm", diagram.to_pgm())?;
        put("diagram.csv", diagram.to_csv().into_bytes())?;
        let mut cpath = String::from("left_tau,right_tau\n");
        for w in &path.waypoints {
            let _ = writeln!(cpath, "{},{}", w[0], w[1]);
        }
        put("coordination_path.csv", cpath.into_bytes())?;
        put("coordination_profiles.csv", coordination_profiles(path, durations)?.into_bytes())?;
    }

    let traces = ee_traces(&scenario, result)?;
    if !traces.is_empty() {
        put("ee_traces.csv", traces.into_bytes())?;
    }
    if let Some(execution) = &result.execution {
        put("joint_profiles.csv", joint_profiles(&scenario, execution).into_bytes())?;
    }
    Ok(written)
}

/// `t` followed by τ, τ̇, τ̈ of both arms for each interpolation mode, all
/// sampled on one 1 ms grid up to the longest map (shorter maps hold their
/// final value).
fn coordination_profiles(path: &crate::coordination::CoordinationPath, durations: [f64; 2]) -> Result<String> {
    let maps =
        Interpolation::ALL.iter().map(|&m| CoordinationMap::build(path, durations, m)).collect::<Result<Vec<_>>>()?;
    let end = maps.iter().map(CoordinationMap::duration).fold(0.0, f64::max);
    let mut out = String::from("t");
    for m in Interpolation::ALL {
        for q in ["tau", "dtau", "ddtau"] {
            for arm in ["left", "right"] {
                let _ = write!(out, ",{}_{q}_{arm}", m.name());
            }
        }
    }
    out.push('\n');
    let n = (end / PROFILE_DT).ceil() as usize;
    for k in 0..=n {
        let t = (k as f64 * PROFILE_DT).min(end);
        let _ = write!(out, "{t}");
        for map in &maps {
            let s = map.eval(t);
            for v in [&s.q, &s.qd, &s.qdd] {
                let _ = write!(out, ",{},{}", v[0], v[1]);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// End-effector positions and orientations of the post-processor's input
/// and output waypoints.
fn ee_traces(scenario: &Scenario, result: &PlanResult) -> Result<String> {
    if result.plpp_input.is_empty() {
        return Ok(String::new());
    }
    let arms = &scenario.world.arms;
    let mut out = String::from("stage,arm,waypoint,x,y,z,qw,qx,qy,qz\n");
    for (stage, paths) in [("before", &result.plpp_input), ("after", &result.plpp_output)] {
        for (k, path) in paths.iter().enumerate() {
            for (i, w) in path.waypoints.iter().enumerate() {
                // Composite paths hold both arms, per-arm paths one.
                let parts: Vec<(usize, &[f64])> = if paths.len() == 1 && w.len() == arms.n_dof() {
                    let (l, r) = arms.split(w)?;
                    vec![(0, l), (1, r)]
                } else {
                    vec![(k, w.as_slice())]
                };
                for (arm, q) in parts {
                    let ee = arms.arm(arm).forward_kinematics(q)?.ee;
                    let u = ee.u;
                    let _ = writeln!(
                        out,
                        "{stage},{},{i},{},{},{},{},{},{},{}",
                        ["left", "right"][arm],
                        ee.x[0],
                        ee.x[1],
                        ee.x[2],
                        u.a,
                        u.v[0],
                        u.v[1],
                        u.v[2]
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Commanded joint positions, velocities and accelerations (left joints
/// first) every millisecond.
fn joint_profiles(scenario: &Scenario, execution: &Execution) -> String {
    let n = scenario.world.arms.n_dof();
    let mut out = String::from("t");
    for prefix in ["q", "qd", "qdd"] {
        for j in 0..n {
            let _ = write!(out, ",{prefix}{}", j + 1);
        }
    }
    out.push('\n');
    let end = execution.duration();
    let steps = (end / PROFILE_DT).ceil() as usize;
    for k in 0..=steps {
        let t = (k as f64 * PROFILE_DT).min(end);
        let s = execution.sample(&scenario.world, t);
        let _ = write!(out, "{t}");
        for v in [&s.q, &s.qd, &s.qdd] {
            for x in v.iter() {
                let _ = write!(out, ",{x}");
            }
        }
        out.push('\n');
    }
    out
}

/// One post-processing problem solved with both gradient modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientTrial {
    pub query: String,
    pub arm: usize,
    pub analytic_time: f64,
    pub numeric_time: f64,
    pub analytic_objective: f64,
    pub numeric_objective: f64,
    pub analytic_iterations: usize,
    pub numeric_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBench {
    pub trials: Vec<GradientTrial>,
}

impl GradientBench {
    pub fn analytic_mean(&self) -> f64 {
        self.trials.iter().map(|t| t.analytic_time).sum::<f64>() / self.trials.len() as f64
    }

    pub fn numeric_mean(&self) -> f64 {
        self.trials.iter().map(|t| t.numeric_time).sum::<f64>() / self.trials.len() as f64
    }

    pub fn speedup(&self) -> f64 {
        self.numeric_mean() / self.analytic_mean()
    }

    /// Largest relative difference of the final objectives.
    pub fn max_objective_gap(&self) -> f64 {
        self.trials
            .iter()
            .map(|t| (t.analytic_objective - t.numeric_objective).abs() / t.analytic_objective.abs().max(1e-12))
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let a = Stat::of(&self.trials.iter().map(|t| t.analytic_time).collect::<Vec<_>>());
        let n = Stat::of(&self.trials.iter().map(|t| t.numeric_time).collect::<Vec<_>>());
        let mut out = String::new();
        for (label, s) in [("analytic gradients", a), ("forward differences", n)] {
            if let Some(s) = s {
                let _ = writeln!(out, "{label:<22} {:.4} ± {:.4} s", s.mean, s.std);
            }
        }
        let _ = writeln!(out, "speedup                {:.2}x", self.speedup());
        let _ = writeln!(out, "max objective gap      {:.3}%", 100.0 * self.max_objective_gap());
        out
    }
}

/// Forward-difference step of the numeric-gradient runs.
pub const NUMERIC_STEP: f64 = 1e-8;

/// Times the post-processor with analytic and with forward-difference
/// gradients on `trials` identical single-arm problems. Problem `k` plans
/// query `k / 2` (cycling) for arm `k % 2` with a seed derived from `seed`.
pub fn gradient_bench(scenario: &Scenario, seed: u64, trials: usize) -> Result<GradientBench> {
    if trials < 10 {
        return Err(Error::Precondition(format!("gradient benchmark needs at least 10 trials, got {trials}")));
    }
    if scenario.queries.is_empty() {
        return Err(Error::InvalidInput("scenario has no queries".into()));
    }
    let config = &scenario.config;
    let world = &scenario.world;
    let mut out = Vec::with_capacity(trials);
    for k in 0..trials {
        let arm = k % 2;
        let q = &scenario.queries[(k / 2) % scenario.queries.len()];
        let chain = world.arms.arm(arm);
        let meter = DistanceMeter::new();
        let space = StateSpace::new(chain.lower_limits(), chain.upper_limits(), config.segment_fraction, |x| {
            world.is_clear(x, ClearanceMode::SingleArm(arm), config.plan_margin, &meter)
        })?;
        let params = config.planner_params(config.segment_fraction, arm_seed(query_seed(seed, k), arm));
        let raw = rrt_connect(&space, &q.start[arm], &q.goal[arm], &params)?;
        let path: JointPath = densify(&simplify(&space, &raw, &params), config.min_waypoints);

        let solve = |gradients: GradientMode| -> Result<(f64, f64, usize)> {
            let mut p = config.plpp_params();
            p.gradients = gradients;
            let problem = PlppProblem::new(world, Layout::Single(arm), p, &path, &meter)?;
            let clock = Instant::now();
            let (_, report) = optimize(&problem, &path)?;
            Ok((clock.elapsed().as_secs_f64(), report.final_objective, report.iterations))
        };
        let (at, ao, ai) = solve(GradientMode::Analytic)?;
        let (nt, no, ni) = solve(GradientMode::ForwardDifference { step: NUMERIC_STEP })?;
        out.push(GradientTrial {
            query: q.name.clone(),
            arm,
            analytic_time: at,
            numeric_time: nt,
            analytic_objective: ao,
            numeric_objective: no,
            analytic_iterations: ai,
            numeric_iterations: ni,
        });
    }
    Ok(GradientBench { trials: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_uses_n_minus_one() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(&[]), None);
        assert_eq!(Stat::of(&[4.0]).unwrap().std, 0.0);
    }

    #[test]
    fn query_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| query_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(query_seed(7, 0), query_seed(8, 0));
    }

    #[test]
    fn gradient_bench_needs_ten_trials() {
        let s = Scenario::desk();
        assert!(matches!(gradient_bench(&s, 0, 0), Err(Error::Precondition(_))));
        assert!(matches!(gradient_bench(&s, 0, 9), Err(Error::Precondition(_))));
    }
}
