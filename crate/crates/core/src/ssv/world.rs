//! Clearance of a dual-arm robot against itself and a static scene.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{ssv_distance, DistanceMeter, DistanceResult, SsvPrimitive};
use crate::error::{Error, Result};
use crate::kinematics::{ChainState, DualArm};

/// A collision part at link granularity, used for exclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Part {
    Obstacle(usize),
    Link { arm: usize, link: usize },
}

/// Static environment plus pairs that are never checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub obstacles: Vec<SsvPrimitive>,
    exclusions: BTreeSet<(Part, Part)>,
}

impl Scene {
    pub fn new(obstacles: Vec<SsvPrimitive>) -> Self {
        Self { obstacles, exclusions: BTreeSet::new() }
    }

    /// Excludes the pair in both orders.
    pub fn exclude(&mut self, a: Part, b: Part) {
        self.exclusions.insert(if a <= b { (a, b) } else { (b, a) });
    }

    pub fn is_excluded(&self, a: Part, b: Part) -> bool {
        self.exclusions.contains(&if a <= b { (a, b) } else { (b, a) })
    }

    pub fn exclusions(&self) -> impl Iterator<Item = &(Part, Part)> {
        self.exclusions.iter()
    }
}

/// Which pairs enter a clearance query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClearanceMode {
    /// Both arms against the environment, each other, and themselves.
    /// Configurations are composite (left then right).
    Full,
    /// Left-right pairs only. Configurations are composite.
    RobotRobotOnly,
    /// One arm against the environment and itself, ignoring the other arm.
    /// Configurations hold only that arm's joints.
    SingleArm(usize),
}

/// One side of a checked pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BodyRef {
    Obstacle(usize),
    Arm { arm: usize, body: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub a: BodyRef,
    pub b: BodyRef,
}

/// Minimum over all checked pairs, with the pair that realizes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearance {
    pub result: DistanceResult,
    /// `None` when the mode has no pairs at all.
    pub pair: Option<PairId>,
}

impl Clearance {
    pub fn distance(&self) -> f64 {
        self.result.distance
    }
}

#[derive(Debug, Clone, Default)]
struct PairTable {
    full: Vec<PairId>,
    robot_robot: Vec<PairId>,
    single: [Vec<PairId>; 2],
}

/// Dual-arm robot plus scene with precomputed pair lists.
#[derive(Debug, Clone)]
pub struct CollisionWorld {
    pub arms: DualArm,
    pub scene: Scene,
    obstacle_bounds: Vec<(Vector3<f64>, f64)>,
    pairs: PairTable,
}

/// Link bodies placed in the world for one configuration.
pub struct Placement {
    states: [Option<ChainState>; 2],
    bodies: [Vec<SsvPrimitive>; 2],
    bounds: [Vec<(Vector3<f64>, f64)>; 2],
}

impl Placement {
    pub fn state(&self, arm: usize) -> Option<&ChainState> {
        self.states[arm].as_ref()
    }
}

impl CollisionWorld {
    pub fn new(arms: DualArm, scene: Scene) -> Result<Self> {
        arms.left.validate()?;
        arms.right.validate()?;
        for o in &scene.obstacles {
            o.validate()?;
        }
        let obstacle_bounds = scene.obstacles.iter().map(|o| o.bounding_sphere()).collect();
        let mut world = Self { arms, scene, obstacle_bounds, pairs: PairTable::default() };
        world.pairs = world.build_pairs();
        Ok(world)
    }

    fn part(&self, body: BodyRef) -> Part {
        match body {
            BodyRef::Obstacle(i) => Part::Obstacle(i),
            BodyRef::Arm { arm, body } => Part::Link { arm, link: self.arms.arm(arm).bodies[body].link },
        }
    }

    fn checked(&self, a: BodyRef, b: BodyRef) -> bool {
        let (pa, pb) = (self.part(a), self.part(b));
        if pa == pb || self.scene.is_excluded(pa, pb) {
            return false;
        }
        if let (
            BodyRef::Arm { arm: x, .. },
            BodyRef::Arm { arm: y, .. },
            Part::Link { link: la, .. },
            Part::Link { link: lb, .. },
        ) = (a, b, pa, pb)
        {
            if x == y {
                let key = (la.min(lb), la.max(lb));
                return !self.arms.arm(x).self_exclusions.contains(&key);
            }
        }
        true
    }

    fn build_pairs(&self) -> PairTable {
        let n_obs = self.scene.obstacles.len();
        let n_body = [self.arms.left.bodies.len(), self.arms.right.bodies.len()];
        let env = |arm: usize| -> Vec<PairId> {
            let mut v = Vec::new();
            for body in 0..n_body[arm] {
                for o in 0..n_obs {
                    v.push(PairId { a: BodyRef::Arm { arm, body }, b: BodyRef::Obstacle(o) });
                }
            }
            v
        };
        let selfp = |arm: usize| -> Vec<PairId> {
            let mut v = Vec::new();
            for i in 0..n_body[arm] {
                for j in i + 1..n_body[arm] {
                    v.push(PairId { a: BodyRef::Arm { arm, body: i }, b: BodyRef::Arm { arm, body: j } });
                }
            }
            v
        };
        let mut rr = Vec::new();
        for i in 0..n_body[0] {
            for j in 0..n_body[1] {
                rr.push(PairId { a: BodyRef::Arm { arm: 0, body: i }, b: BodyRef::Arm { arm: 1, body: j } });
            }
        }
        let keep = |v: Vec<PairId>| -> Vec<PairId> { v.into_iter().filter(|p| self.checked(p.a, p.b)).collect() };
        let robot_robot = keep(rr);
        let single = [keep([env(0), selfp(0)].concat()), keep([env(1), selfp(1)].concat())];
        let full = [single[0].clone(), single[1].clone(), robot_robot.clone()].concat();
        PairTable { full, robot_robot, single }
    }

    /// Pairs checked in `mode`, in tie-breaking order.
    pub fn pairs(&self, mode: ClearanceMode) -> &[PairId] {
        match mode {
            ClearanceMode::Full => &self.pairs.full,
            ClearanceMode::RobotRobotOnly => &self.pairs.robot_robot,
            ClearanceMode::SingleArm(a) => &self.pairs.single[a],
        }
    }

    /// Configuration length expected in `mode`.
    pub fn dof(&self, mode: ClearanceMode) -> usize {
        match mode {
            ClearanceMode::SingleArm(a) => self.arms.arm(a).n_dof(),
            _ => self.arms.n_dof(),
        }
    }

    /// Runs forward kinematics and places every link body that `mode` needs.
    pub fn place(&self, q: &[f64], mode: ClearanceMode) -> Result<Placement> {
        let mut states: [Option<ChainState>; 2] = [None, None];
        match mode {
            ClearanceMode::SingleArm(a) => {
                if a > 1 {
                    return Err(Error::InvalidInput(format!("arm index {a}")));
                }
                states[a] = Some(self.arms.arm(a).forward_kinematics(q)?);
            }
            _ => {
                let (l, r) = self.arms.split(q)?;
                states[0] = Some(self.arms.left.forward_kinematics(l)?);
                states[1] = Some(self.arms.right.forward_kinematics(r)?);
            }
        }
        let mut bodies: [Vec<SsvPrimitive>; 2] = [Vec::new(), Vec::new()];
        let mut bounds: [Vec<(Vector3<f64>, f64)>; 2] = [Vec::new(), Vec::new()];
        for arm in 0..2 {
            if let Some(st) = &states[arm] {
                bodies[arm] =
                    self.arms.arm(arm).bodies.iter().map(|b| b.shape.transformed(&st.links[b.link])).collect();
                bounds[arm] = bodies[arm].iter().map(|b| b.bounding_sphere()).collect();
            }
        }
        Ok(Placement { states, bodies, bounds })
    }

    pub fn placed<'a>(&'a self, placement: &'a Placement, body: BodyRef) -> &'a SsvPrimitive {
        match body {
            BodyRef::Obstacle(i) => &self.scene.obstacles[i],
            BodyRef::Arm { arm, body } => &placement.bodies[arm][body],
        }
    }

    fn bound(&self, placement: &Placement, body: BodyRef) -> (Vector3<f64>, f64) {
        match body {
            BodyRef::Obstacle(i) => self.obstacle_bounds[i],
            BodyRef::Arm { arm, body } => placement.bounds[arm][body],
        }
    }

    fn min_over_pairs(&self, placement: &Placement, mode: ClearanceMode) -> (Clearance, u64) {
        let mut best = Clearance {
            result: DistanceResult {
                distance: f64::INFINITY,
                witness_a: Vector3::zeros(),
                witness_b: Vector3::zeros(),
                normal: Vector3::z(),
            },
            pair: None,
        };
        let pairs = self.pairs(mode);
        for p in pairs {
            let r = ssv_distance(self.placed(placement, p.a), self.placed(placement, p.b));
            // Strict comparison keeps the first pair on ties.
            if r.distance < best.result.distance {
                best = Clearance { result: r, pair: Some(*p) };
            }
        }
        (best, pairs.len() as u64)
    }

    /// Minimum signed distance over every pair checked in `mode`.
    pub fn min_clearance(&self, q: &[f64], mode: ClearanceMode, meter: &DistanceMeter) -> Result<Clearance> {
        let start = Instant::now();
        let placement = self.place(q, mode)?;
        let (c, n) = self.min_over_pairs(&placement, mode);
        meter.record(n, start.elapsed());
        Ok(c)
    }

    /// Whether every checked pair is at least `margin` apart. Stops at the
    /// first violating pair and skips pairs whose bounding spheres are
    /// already `margin` apart.
    pub fn is_clear(&self, q: &[f64], mode: ClearanceMode, margin: f64, meter: &DistanceMeter) -> bool {
        let start = Instant::now();
        let Ok(placement) = self.place(q, mode) else {
            return false;
        };
        let mut evaluated = 0u64;
        let mut clear = true;
        for p in self.pairs(mode) {
            let (ca, ra) = self.bound(&placement, p.a);
            let (cb, rb) = self.bound(&placement, p.b);
            if (ca - cb).norm() - ra - rb >= margin {
                continue;
            }
            evaluated += 1;
            if ssv_distance(self.placed(&placement, p.a), self.placed(&placement, p.b)).distance < margin {
                clear = false;
                break;
            }
        }
        meter.record(evaluated, start.elapsed());
        clear
    }

    /// Minimum clearance and its gradient with respect to the configuration
    /// of `mode`: `n̂ᵀ (J_a − J_b)` for the witness points of the active pair.
    pub fn clearance_gradient(
        &self,
        q: &[f64],
        mode: ClearanceMode,
        meter: &DistanceMeter,
    ) -> Result<(Clearance, DVector<f64>)> {
        let start = Instant::now();
        let placement = self.place(q, mode)?;
        let (c, n) = self.min_over_pairs(&placement, mode);
        let mut grad = DVector::zeros(q.len());
        if let Some(pair) = c.pair {
            let normal = c.result.normal;
            for (body, point, sign) in [(pair.a, c.result.witness_a, 1.0), (pair.b, c.result.witness_b, -1.0)] {
                if let BodyRef::Arm { arm, body } = body {
                    let link = self.arms.arm(arm).bodies[body].link;
                    let state = placement.states[arm].as_ref().expect("placed arm");
                    let jac = state.point_jacobian(link, &point);
                    let row = jac.tr_mul(&normal) * sign;
                    let offset = match mode {
                        ClearanceMode::SingleArm(_) => 0,
                        _ if arm == 1 => self.arms.left.n_dof(),
                        _ => 0,
                    };
                    let mut seg = grad.rows_mut(offset, row.len());
                    seg += row;
                }
            }
        }
        meter.record(n, start.elapsed());
        Ok((c, grad))
    }
}
