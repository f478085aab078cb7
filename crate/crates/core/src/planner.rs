//! Bidirectional RRT (RRT-Connect) over a box-bounded real vector space with
//! discretized segment validation, plus shortcut simplification and
//! waypoint densification. The same planner serves single arms, the
//! composite robot, and the 2D coordination space.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered waypoints; the first is the start and the last the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPath {
    pub waypoints: Vec<Vec<f64>>,
}

impl JointPath {
    pub fn new(waypoints: Vec<Vec<f64>>) -> Self {
        Self { waypoints }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Sum of Euclidean segment lengths.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| dist(&w[0], &w[1])).sum()
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Validation step as a fraction of the space extent.
    pub longest_valid_segment_fraction: f64,
    /// Wall-clock budget in seconds.
    pub max_time: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Tree extension step in multiples of the validation step.
    pub extend_factor: f64,
    /// Shortcut attempts per simplification pass.
    pub shortcut_attempts: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            longest_valid_segment_fraction: 0.001,
            max_time: 5.0,
            max_iterations: 20_000,
            seed: 0,
            extend_factor: 10.0,
            shortcut_attempts: 100,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let f = self.longest_valid_segment_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidInput(format!("segment fraction {f} outside (0, 1)")));
        }
        if !(self.max_time > 0.0) || self.max_iterations == 0 || !(self.extend_factor > 0.0) {
            return Err(Error::InvalidInput("planner budgets must be positive".into()));
        }
        Ok(())
    }
}

type Validity<'a> = Box<dyn Fn(&[f64]) -> bool + Send + Sync + 'a>;

/// Box-bounded space with a state-validity predicate.
pub struct StateSpace<'a> {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fraction: f64,
    validity: Validity<'a>,
}

impl<'a> StateSpace<'a> {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        fraction: f64,
        validity: impl Fn(&[f64]) -> bool + Send + Sync + 'a,
    ) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidInput("bound vectors must be non-empty and equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidInput("lower bound must be below upper bound".into()));
        }
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidInput(format!("segment fraction {fraction} outside (0, 1)")));
        }
        Ok(Self { lower, upper, fraction, validity: Box::new(validity) })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Sum of per-dimension ranges.
    pub fn extent(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).sum()
    }

    /// Distance between consecutive validity checks on a segment.
    pub fn resolution(&self) -> f64 {
        self.fraction * self.extent()
    }

    pub fn in_bounds(&self, q: &[f64]) -> bool {
        q.len() == self.dim() && q.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v >= l && v <= u)
    }

    pub fn is_valid(&self, q: &[f64]) -> bool {
        self.in_bounds(q) && (self.validity)(q)
    }

    /// Number of states [`segment_valid`](Self::segment_valid) checks for a
    /// segment of this length, endpoints included.
    pub fn check_count(&self, length: f64) -> usize {
        (length / self.resolution()).ceil() as usize + 1
    }

    /// Checks evenly spaced states from `a` to `b`, both endpoints included.
    pub fn segment_valid(&self, a: &[f64], b: &[f64]) -> bool {
        let n = self.check_count(dist(a, b));
        if n == 1 {
            return self.is_valid(a);
        }
        // Endpoints first; interior states are typically the expensive misses.
        if !self.is_valid(b) || !self.is_valid(a) {
            return false;
        }
        (1..n - 1).all(|k| self.is_valid(&lerp(a, b, k as f64 / (n - 1) as f64)))
    }

    pub fn path_valid(&self, path: &JointPath) -> bool {
        !path.is_empty()
            && path.waypoints.iter().all(|w| self.is_valid(w))
            && path.waypoints.windows(2).all(|w| self.segment_valid(&w[0], &w[1]))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.gen_range(*l..*u)).collect()
    }
}

struct Tree {
    nodes: Vec<Vec<f64>>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: Vec<f64>) -> Self {
        Self { nodes: vec![root], parents: vec![usize::MAX] }
    }

    fn nearest(&self, q: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = n.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn push(&mut self, q: Vec<f64>, parent: usize) -> usize {
        self.nodes.push(q);
        self.parents.push(parent);
        self.nodes.len() - 1
    }

    /// Root-to-node sequence.
    fn branch(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        loop {
            out.push(self.nodes[i].clone());
            if self.parents[i] == usize::MAX {
                break;
            }
            i = self.parents[i];
        }
        out.reverse();
        out
    }
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(space: &StateSpace, tree: &mut Tree, target: &[f64], step: f64) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near].clone();
    let d = dist(&from, target);
    let (q_new, reached) = if d <= step { (target.to_vec(), true) } else { (lerp(&from, target, step / d), false) };
    if !space.segment_valid(&from, &q_new) {
        return Extend::Trapped;
    }
    let id = tree.push(q_new, near);
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

/// RRT-Connect from `start` to `goal`. A directly connectable pair is
/// returned as a two-waypoint path without growing any tree.
///
/// Returns [`Error::Precondition`] for invalid endpoints and
/// [`Error::PlanningFailure`] when the budget runs out.
pub fn rrt_connect(space: &StateSpace, start: &[f64], goal: &[f64], params: &PlannerParams) -> Result<JointPath> {
    params.validate()?;
    if !space.is_valid(start) {
        return Err(Error::Precondition("start state is invalid".into()));
    }
    if !space.is_valid(goal) {
        return Err(Error::Precondition("goal state is invalid".into()));
    }
    if space.segment_valid(start, goal) {
        return Ok(JointPath::new(vec![start.to_vec(), goal.to_vec()]));
    }
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let step = space.resolution() * params.extend_factor;
    let mut trees = [Tree::new(start.to_vec()), Tree::new(goal.to_vec())];
    // trees[0] grows from the start while `forward` is true.
    let mut forward = true;
    for iteration in 0..params.max_iterations {
        if clock.elapsed().as_secs_f64() > params.max_time {
            return Err(Error::PlanningFailure { iterations: iteration, elapsed: clock.elapsed().as_secs_f64() });
        }
        let target = space.sample(&mut rng);
        let [t0, t1] = &mut trees;
        let (ta, tb) = if forward { (t0, t1) } else { (t1, t0) };
        let new_id = match extend(space, ta, &target, step) {
            Extend::Trapped => None,
            Extend::Advanced(id) | Extend::Reached(id) => Some(id),
        };
        if let Some(id) = new_id {
            let q_new = ta.nodes[id].clone();
            loop {
                match extend(space, tb, &q_new, step) {
                    Extend::Advanced(_) => continue,
                    Extend::Trapped => break,
                    Extend::Reached(bid) => {
                        let mut from_a = ta.branch(id);
                        let mut from_b = tb.branch(bid);
                        // Both branches end at q_new; drop one copy.
                        from_b.pop();
                        from_b.reverse();
                        from_a.extend(from_b);
                        if !forward {
                            from_a.reverse();
                        }
                        return Ok(JointPath::new(from_a));
                    }
                }
            }
        }
        forward = !forward;
    }
    Err(Error::PlanningFailure { iterations: params.max_iterations, elapsed: clock.elapsed().as_secs_f64() })
}

/// Drops interior waypoints whose perpendicular deviation from the line
/// through their neighbors is below `tol`.
fn prune_collinear(path: &mut JointPath, tol: f64) -> bool {
    let mut changed = false;
    let mut i = 1;
    while i + 1 < path.waypoints.len() {
        let (a, m, b) = (&path.waypoints[i - 1], &path.waypoints[i], &path.waypoints[i + 1]);
        let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let am: Vec<f64> = m.iter().zip(a).map(|(x, y)| x - y).collect();
        let len2: f64 = ab.iter().map(|x| x * x).sum();
        let t = if len2 > 0.0 { am.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2 } else { 0.0 };
        let dev2: f64 = am.iter().zip(&ab).map(|(x, y)| (x - t * y).powi(2)).sum();
        if (0.0..=1.0).contains(&t) && dev2.sqrt() < tol {
            path.waypoints.remove(i);
            changed = true;
        } else {
            i += 1;
        }
    }
    changed
}

/// Shortcut simplification. Random pairs of waypoints are connected directly
/// when the straight segment is valid, then nearly collinear waypoints are
/// dropped. Endpoints are never moved and the configuration-space length
/// never grows.
pub fn simplify(space: &StateSpace, path: &JointPath, params: &PlannerParams) -> JointPath {
    let mut out = path.clone();
    if out.len() <= 2 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_5407_7c07);
    let tol = 1e-9 * space.extent();
    let last = out.len() - 1;
    if space.segment_valid(&out.waypoints[0], &out.waypoints[last]) {
        out.waypoints = vec![out.waypoints[0].clone(), out.waypoints[last].clone()];
        return out;
    }
    for _pass in 0..5 {
        let mut changed = false;
        for _ in 0..params.shortcut_attempts {
            let n = out.len();
            if n <= 2 {
                break;
            }
            let i = rng.gen_range(0..n - 2);
            let j = rng.gen_range(i + 2..n);
            if space.segment_valid(&out.waypoints[i], &out.waypoints[j]) {
                out.waypoints.drain(i + 1..j);
                changed = true;
            }
        }
        changed |= prune_collinear(&mut out, tol);
        if !changed {
            break;
        }
    }
    out
}

/// Inserts linearly interpolated waypoints until the path has at least
/// `min_waypoints`, spreading them over segments in proportion to length.
pub fn densify(path: &JointPath, min_waypoints: usize) -> JointPath {
    let n = path.len();
    if n < 2 || n >= min_waypoints {
        return path.clone();
    }
    let extra = min_waypoints - n;
    let lengths: Vec<f64> = path.waypoints.windows(2).map(|w| dist(&w[0], &w[1])).collect();
    let total: f64 = lengths.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        lengths.iter().map(|l| l / total).collect()
    } else {
        vec![1.0 / lengths.len() as f64; lengths.len()]
    };
    // Largest-remainder apportionment of the extra points.
    let raw: Vec<f64> = weights.iter().map(|w| w * extra as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = extra - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    let mut out = Vec::with_capacity(min_waypoints);
    for (k, w) in path.waypoints.windows(2).enumerate() {
        out.push(w[0].clone());
        let m = counts[k];
        for s in 1..=m {
            out.push(lerp(&w[0], &w[1], s as f64 / (m + 1) as f64));
        }
    }
    out.push(path.waypoints[n - 1].clone());
    JointPath::new(out)
}
