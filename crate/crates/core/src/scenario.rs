//! Scenario files: two arm models with their mounting, the static scene, a
//! list of named motion queries and parameter overrides, all in one TOML
//! document.
//!
//! ```toml
//! [params]                      # optional, see PipelineConfig
//! d_obs = 0.01
//!
//! [models.panda]
//! ee_link = 7                   # optional, defaults to the last link
//! tcp = { xyz = [0, 0, 0.2] }
//! adjacent_exclusion = 2        # skip self pairs with |i − j| ≤ 2
//! [[models.panda.joints]]
//! xyz = [0, 0, 0.333]
//! rpy = [0, 0, 0]
//! axis = [0, 0, 1]              # optional, defaults to z
//! lower = -2.9
//! upper = 2.9
//! max_velocity = 2.1
//! max_acceleration = 3.7
//! [[models.panda.bodies]]
//! link = 1
//! kind = "capsule"
//! a = [0, 0, -0.2]
//! b = [0, 0, 0]
//! radius = 0.08
//!
//! [[robots]]                    # exactly two: left, then right
//! name = "left"
//! model = "panda"
//! base = { xyz = [0, 0.3, 0] }
//!
//! [[obstacles]]
//! name = "table"
//! kind = "rectangle"            # sphere, capsule, triangle, rectangle, box, tray
//! corner = [-0.4, -1, -0.01]
//! edge1 = [1.6, 0, 0]
//! edge2 = [0, 2, 0]
//! radius = 0.01
//!
//! [[exclusions]]                # obstacle never checked against these links
//! obstacle = "table"
//! robot = "left"
//! links = [0]
//!
//! [poses.left]
//! home = [0, -0.78, 0, -2.35, 0, 1.57, 0.78]
//!
//! [[queries]]
//! name = "home-to-bin"
//! left = ["home", "bin"]
//! right = ["home", "bin"]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kinematics::{DualArm, Frame, LinkBody, RevoluteJoint, SerialChain};
use crate::pipeline::PipelineConfig;
use crate::ssv::{ClearanceMode, CollisionWorld, DistanceMeter, Part, Scene, SsvPrimitive};

/// The desk benchmark shipped with the crate.
pub const DESK: &str = include_str!("../scenarios/desk.toml");

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseSpec {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

impl PoseSpec {
    fn frame(&self) -> Frame {
        Frame::from_xyz_rpy(self.xyz, self.rpy)
    }
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointSpec {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    #[serde(default = "z_axis")]
    axis: [f64; 3],
    lower: f64,
    upper: f64,
    max_velocity: f64,
    max_acceleration: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ShapeSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
    Triangle {
        a: [f64; 3],
        b: [f64; 3],
        c: [f64; 3],
        radius: f64,
    },
    Rectangle {
        corner: [f64; 3],
        edge1: [f64; 3],
        edge2: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box surface as twelve rounded triangles.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        radius: f64,
    },
    /// The same box without its top face (ten triangles).
    Tray {
        center: [f64; 3],
        half_extents: [f64; 3],
        radius: f64,
    },
}

fn v(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

impl ShapeSpec {
    fn primitives(&self) -> Vec<SsvPrimitive> {
        match *self {
            ShapeSpec::Sphere { center, radius } => vec![SsvPrimitive::sphere(v(center), radius)],
            ShapeSpec::Capsule { a, b, radius } => vec![SsvPrimitive::capsule(v(a), v(b), radius)],
            ShapeSpec::Triangle { a, b, c, radius } => {
                vec![SsvPrimitive::rounded_triangle(v(a), v(b), v(c), radius)]
            }
            ShapeSpec::Rectangle { corner, edge1, edge2, radius } => {
                SsvPrimitive::rounded_rectangle(v(corner), v(edge1), v(edge2), radius).to_vec()
            }
            ShapeSpec::Box { center, half_extents, radius } => box_faces(center, half_extents, radius, true),
            ShapeSpec::Tray { center, half_extents, radius } => box_faces(center, half_extents, radius, false),
        }
    }
}

fn box_faces(center: [f64; 3], half_extents: [f64; 3], radius: f64, top: bool) -> Vec<SsvPrimitive> {
    let c = v(center);
    let h = v(half_extents);
    let mut out = Vec::with_capacity(12);
    for axis in 0..3 {
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut e1 = Vector3::zeros();
        e1[u] = 2.0 * h[u];
        let mut e2 = Vector3::zeros();
        e2[w] = 2.0 * h[w];
        for side in [-1.0, 1.0] {
            if axis == 2 && side > 0.0 && !top {
                continue;
            }
            let mut corner = c - h;
            corner[axis] = c[axis] + side * h[axis];
            out.extend(SsvPrimitive::rounded_rectangle(corner, e1, e2, radius));
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct BodySpec {
    link: usize,
    #[serde(flatten)]
    shape: ShapeSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    joints: Vec<JointSpec>,
    #[serde(default)]
    tcp: PoseSpec,
    ee_link: Option<usize>,
    #[serde(default)]
    bodies: Vec<BodySpec>,
    #[serde(default)]
    adjacent_exclusion: usize,
    #[serde(default)]
    self_exclusions: Vec<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSpec {
    name: String,
    model: String,
    #[serde(default)]
    base: PoseSpec,
}

#[derive(Debug, Deserialize)]
struct ObstacleSpec {
    name: String,
    #[serde(flatten)]
    shape: ShapeSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExclusionSpec {
    obstacle: String,
    robot: String,
    links: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuerySpec {
    name: String,
    left: [String; 2],
    right: [String; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    params: PipelineConfig,
    models: BTreeMap<String, ModelSpec>,
    robots: Vec<RobotSpec>,
    #[serde(default)]
    obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    exclusions: Vec<ExclusionSpec>,
    #[serde(default)]
    poses: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    queries: Vec<QuerySpec>,
}

/// A motion query with start and goal per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedQuery {
    pub name: String,
    pub start: [Vec<f64>; 2],
    pub goal: [Vec<f64>; 2],
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub world: CollisionWorld,
    pub config: PipelineConfig,
    pub queries: Vec<NamedQuery>,
    /// Obstacle group names with the obstacle indices they expanded to.
    pub obstacle_groups: Vec<(String, Vec<usize>)>,
    /// Named poses per robot.
    pub poses: [BTreeMap<String, Vec<f64>>; 2],
    /// The document the scenario was parsed from.
    pub source: String,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn build_chain(name: &str, spec: &ModelSpec, base: Frame) -> Result<SerialChain> {
    let joints = spec
        .joints
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let axis = v(j.axis);
            if !(axis.norm() > 0.0) {
                return Err(err(format!("models.{name}.joints[{i}].axis is zero")));
            }
            Ok(RevoluteJoint {
                origin: Frame::from_xyz_rpy(j.xyz, j.rpy),
                axis: axis.normalize(),
                lower: j.lower,
                upper: j.upper,
                max_velocity: j.max_velocity,
                max_acceleration: j.max_acceleration,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = joints.len();
    let bodies = spec
        .bodies
        .iter()
        .flat_map(|b| b.shape.primitives().into_iter().map(move |shape| LinkBody { link: b.link, shape }))
        .collect();
    let mut self_exclusions = Vec::new();
    for i in 0..=n {
        for j in i + 1..=n {
            if j - i <= spec.adjacent_exclusion {
                self_exclusions.push((i, j));
            }
        }
    }
    for [a, b] in &spec.self_exclusions {
        let key = (*a.min(b), *a.max(b));
        if !self_exclusions.contains(&key) {
            self_exclusions.push(key);
        }
    }
    let chain = SerialChain {
        name: name.to_string(),
        base,
        joints,
        tcp: spec.tcp.frame(),
        ee_link: spec.ee_link.unwrap_or(n),
        bodies,
        self_exclusions,
    };
    chain.validate().map_err(|e| err(format!("models.{name}: {e}")))?;
    Ok(chain)
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Scenario(m) => err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The bundled desk benchmark.
    pub fn desk() -> Self {
        Self::parse(DESK).expect("bundled scenario is valid")
    }

    /// Parses and validates a scenario document. Every query must have
    /// collision-free start and goal configurations within joint limits;
    /// all offending queries are reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        file.params.validate().map_err(|e| err(e.to_string()))?;
        if file.robots.len() != 2 {
            return Err(err(format!("robots: expected 2 entries, found {}", file.robots.len())));
        }
        let mut chains = Vec::with_capacity(2);
        for (i, r) in file.robots.iter().enumerate() {
            let model = file
                .models
                .get(&r.model)
                .ok_or_else(|| err(format!("robots[{i}].model: unknown model '{}'", r.model)))?;
            chains.push(build_chain(&r.name, model, r.base.frame())?);
        }
        let right = chains.pop().expect("two chains");
        let left = chains.pop().expect("two chains");
        let robot_index = |name: &str| file.robots.iter().position(|r| r.name == name);

        let mut obstacles = Vec::new();
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, o) in file.obstacles.iter().enumerate() {
            if groups.iter().any(|(n, _)| *n == o.name) {
                return Err(err(format!("obstacles[{i}].name: duplicate '{}'", o.name)));
            }
            let prims = o.shape.primitives();
            for p in &prims {
                p.validate().map_err(|e| err(format!("obstacles[{i}] '{}': {e}", o.name)))?;
            }
            let start = obstacles.len();
            obstacles.extend(prims);
            groups.push((o.name.clone(), (start..obstacles.len()).collect()));
        }
        let mut scene = Scene::new(obstacles);
        for (i, x) in file.exclusions.iter().enumerate() {
            let (_, ids) = groups
                .iter()
                .find(|(n, _)| *n == x.obstacle)
                .ok_or_else(|| err(format!("exclusions[{i}].obstacle: unknown '{}'", x.obstacle)))?;
            let arm =
                robot_index(&x.robot).ok_or_else(|| err(format!("exclusions[{i}].robot: unknown '{}'", x.robot)))?;
            for &link in &x.links {
                for &o in ids {
                    scene.exclude(Part::Obstacle(o), Part::Link { arm, link });
                }
            }
        }
        let world = CollisionWorld::new(DualArm::new(left, right), scene).map_err(|e| err(e.to_string()))?;

        let mut poses: [BTreeMap<String, Vec<f64>>; 2] = Default::default();
        for (robot, table) in &file.poses {
            let arm = robot_index(robot).ok_or_else(|| err(format!("poses.{robot}: unknown robot")))?;
            let n = world.arms.arm(arm).n_dof();
            for (pose, q) in table {
                if q.len() != n {
                    return Err(err(format!("poses.{robot}.{pose}: expected {n} values, found {}", q.len())));
                }
            }
            poses[arm] = table.clone();
        }

        let mut queries = Vec::with_capacity(file.queries.len());
        for (i, q) in file.queries.iter().enumerate() {
            if queries.iter().any(|x: &NamedQuery| x.name == q.name) {
                return Err(err(format!("queries[{i}].name: duplicate '{}'", q.name)));
            }
            let lookup = |arm: usize, key: &str| {
                poses[arm].get(key).cloned().ok_or_else(|| {
                    err(format!("queries[{i}] '{}': unknown pose '{key}' for {}", q.name, file.robots[arm].name))
                })
            };
            queries.push(NamedQuery {
                name: q.name.clone(),
                start: [lookup(0, &q.left[0])?, lookup(1, &q.right[0])?],
                goal: [lookup(0, &q.left[1])?, lookup(1, &q.right[1])?],
            });
        }

        let scenario = Scenario {
            name: file.name.unwrap_or_else(|| "unnamed".into()),
            world,
            config: file.params,
            queries,
            obstacle_groups: groups,
            poses,
            source: text.to_string(),
        };
        let problems: Vec<String> = scenario
            .queries
            .iter()
            .filter_map(|q| scenario.check_query(q).err().map(|e| format!("  {}: {e}", q.name)))
            .collect();
        if !problems.is_empty() {
            return Err(err(format!("invalid queries:\n{}", problems.join("\n"))));
        }
        Ok(scenario)
    }

    /// Checks limits and clearance of a query's start and goal.
    pub fn check_query(&self, q: &NamedQuery) -> Result<()> {
        let meter = DistanceMeter::new();
        for (label, conf) in [("start", &q.start), ("goal", &q.goal)] {
            let composite = self.world.arms.join(&conf[0], &conf[1])?;
            if !self.world.arms.within_limits(&composite) {
                return Err(Error::Precondition(format!("{label} outside joint limits")));
            }
            let c = self.world.min_clearance(&composite, ClearanceMode::Full, &meter)?;
            if c.distance() < self.config.plan_margin {
                return Err(Error::Precondition(format!(
                    "{label} clearance {:.4} m below margin {} m ({:?})",
                    c.distance(),
                    self.config.plan_margin,
                    c.pair
                )));
            }
        }
        Ok(())
    }

    /// Obstacle indices of a named obstacle group.
    pub fn obstacle_group(&self, name: &str) -> Option<&[usize]> {
        self.obstacle_groups.iter().find(|(n, _)| n == name).map(|(_, ids)| ids.as_slice())
    }
}
