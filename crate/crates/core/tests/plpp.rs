use dualarm_core::kinematics::{DualArm, Frame, LinkBody, RevoluteJoint, SerialChain};
use dualarm_core::planner::{densify, rrt_connect, simplify, JointPath, PlannerParams, StateSpace};
use dualarm_core::plpp::{combined_path_length, optimize, Layout, PlppParams, PlppProblem};
use dualarm_core::scenario::Scenario;
use dualarm_core::so3::{log_map, UnitQuat};
use dualarm_core::ssv::{ClearanceMode, CollisionWorld, DistanceMeter, Scene, SsvPrimitive};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{constraint_error, gradient_error, random_path};

const L1: f64 = 0.4;
const L2: f64 = 0.4;
const L3: f64 = 0.1;

fn z_joint(x: f64) -> RevoluteJoint {
    RevoluteJoint {
        origin: Frame::from_translation(Vector3::new(x, 0.0, 0.0)),
        axis: Vector3::z(),
        lower: -3.1,
        upper: 3.1,
        max_velocity: 2.0,
        max_acceleration: 5.0,
    }
}

/// Planar arm with three parallel z axes; its end effector has exactly the
/// three task-space freedoms x, y and yaw.
fn planar(name: &str, base_y: f64) -> SerialChain {
    SerialChain {
        name: name.into(),
        base: Frame::from_translation(Vector3::new(0.0, base_y, 0.0)),
        joints: vec![z_joint(0.0), z_joint(L1), z_joint(L2)],
        tcp: Frame::from_translation(Vector3::new(L3, 0.0, 0.0)),
        ee_link: 3,
        bodies: vec![LinkBody { link: 3, shape: SsvPrimitive::sphere(Vector3::zeros(), 0.02) }],
        self_exclusions: vec![],
    }
}

/// Planar arm world with a single distant obstacle.
fn planar_world() -> CollisionWorld {
    let far = SsvPrimitive::sphere(Vector3::new(0.0, 0.0, 5.0), 0.1);
    CollisionWorld::new(DualArm::new(planar("left", 0.0), planar("right", 10.0)), Scene::new(vec![far])).unwrap()
}

fn planar_ik(x: f64, y: f64, yaw: f64) -> Vec<f64> {
    let (wx, wy) = (x - L3 * yaw.cos(), y - L3 * yaw.sin());
    let c2 = (wx * wx + wy * wy - L1 * L1 - L2 * L2) / (2.0 * L1 * L2);
    let q2 = c2.acos();
    let q1 = wy.atan2(wx) - (L2 * q2.sin()).atan2(L1 + L2 * q2.cos());
    vec![q1, q2, yaw - q1 - q2]
}

fn line(n: usize, from: [f64; 3], to: [f64; 3]) -> JointPath {
    JointPath::new(
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                planar_ik(
                    from[0] + t * (to[0] - from[0]),
                    from[1] + t * (to[1] - from[1]),
                    from[2] + t * (to[2] - from[2]),
                )
            })
            .collect(),
    )
}

/// Independent re-summation of the combined length.
fn resummed_length(chain: &SerialChain, waypoints: &[Vec<f64>], alpha: f64) -> f64 {
    let poses: Vec<_> = waypoints.iter().map(|q| chain.forward_kinematics(q).unwrap().ee).collect();
    let mut total = 0.0;
    for w in poses.windows(2) {
        let dx = w[1].x - w[0].x;
        // Relative rotation from matrices, then nalgebra's own log.
        let rel = w[0].rotation.transpose() * w[1].rotation;
        let r = nalgebra::Rotation3::from_matrix_unchecked(rel).scaled_axis();
        total += 0.5 * (alpha * dx.norm_squared() + r.norm_squared());
    }
    total
}

#[test]
fn combined_length_matches_resummation() {
    let s = Scenario::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let path = random_path(&s.world, Layout::Single(0), 20, &mut rng);
        let ours = combined_path_length(&s.world.arms.left, &path.waypoints, 5.0).unwrap();
        let oracle = resummed_length(&s.world.arms.left, &path.waypoints, 5.0);
        assert!((ours - oracle).abs() <= 1e-12 * (1.0 + oracle), "{ours} vs {oracle}");
    }
    let q = planar_ik(0.5, 0.0, 0.0);
    assert_eq!(combined_path_length(&planar("p", 0.0), &[q.clone(), q], 5.0).unwrap(), 0.0);
    let two = line(2, [0.5, -0.1, 0.0], [0.5, 0.1, 0.0]);
    let v = combined_path_length(&planar("p", 0.0), &two.waypoints, 5.0).unwrap();
    assert!((v - 0.1).abs() < 1e-12);
}

#[test]
fn gradient_matches_forward_differences() {
    let s = Scenario::desk();
    let meter = DistanceMeter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..100 {
        let layout = match k % 3 {
            0 => Layout::Single(0),
            1 => Layout::Single(1),
            _ => Layout::Composite,
        };
        let path = random_path(&s.world, layout, 6, &mut rng);
        let problem = PlppProblem::new(&s.world, layout, PlppParams::default(), &path, &meter).unwrap();
        let rel = gradient_error(&problem, &path, 1e-8);
        assert!(rel < 1e-6, "problem {k}: relative error {rel}");
    }
}

#[test]
fn one_joint_gradient_matches_closed_form() {
    let r = 0.3;
    let mut chain = planar("one", 0.0);
    chain.joints.truncate(1);
    chain.tcp = Frame::from_translation(Vector3::new(r, 0.0, 0.0));
    chain.ee_link = 1;
    chain.bodies[0].link = 1;
    let far = SsvPrimitive::sphere(Vector3::new(0.0, 0.0, 5.0), 0.1);
    let world = CollisionWorld::new(DualArm::new(chain.clone(), chain), Scene::new(vec![far])).unwrap();
    let meter = DistanceMeter::new();
    let alpha = 5.0;
    for (t0, t1, t2) in [(0.0, 0.4, 0.5), (-1.0, 0.2, 1.1), (0.3, -0.6, 0.9)] {
        let path = JointPath::new(vec![vec![t0], vec![t1], vec![t2]]);
        let problem = PlppProblem::new(&world, Layout::Single(0), PlppParams::default(), &path, &meter).unwrap();
        let (_, g) = problem.objective_and_gradient(&problem.pack(&path)).unwrap();
        let f1: f64 = t1 - t0;
        let f2: f64 = t2 - t1;
        let closed = alpha * r * r * (f1.sin() - f2.sin()) + f1 - f2;
        assert!((g[0] * problem.scale - closed).abs() < 1e-12);
    }
}

#[test]
fn constraint_rows_match_central_differences() {
    let s = Scenario::desk();
    let meter = DistanceMeter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let chain = &s.world.arms.left;
    let mode = ClearanceMode::SingleArm(0);
    let (mut checked, mut kinks) = (0, 0);
    while checked < 100 {
        let q: Vec<f64> = chain.joints.iter().map(|j| rng.gen_range(j.lower..j.upper)).collect();
        let d = s.world.min_clearance(&q, mode, &meter).unwrap().distance();
        if !(d > 0.005 && d < 0.3) {
            continue;
        }
        let Some(rel) = constraint_error(&s.world, 0, &q, 0.02, 1e-6) else {
            kinks += 1;
            continue;
        };
        checked += 1;
        assert!(rel < 1e-5, "relative error {rel} at {q:?}");
    }
    assert!(kinks < checked, "{kinks} witness switches");
}

#[test]
fn waypoint_at_margin_has_zero_constraint() {
    let world = planar_world();
    let meter = DistanceMeter::new();
    let q = planar_ik(0.5, 0.0, 0.0);
    let d = world.min_clearance(&q, ClearanceMode::SingleArm(0), &meter).unwrap().distance();
    let path = JointPath::new(vec![q.clone(), q.clone(), q.clone()]);
    let params = PlppParams { d_obs: d, ..PlppParams::default() };
    let problem = PlppProblem::new(&world, Layout::Single(0), params, &path, &meter).unwrap();
    let (c, _) = problem.constraints_and_jacobian(&problem.pack(&path)).unwrap();
    assert!(c[0].abs() < 1e-12);
}

#[test]
fn straight_path_is_stationary() {
    let world = planar_world();
    let meter = DistanceMeter::new();
    let path = line(20, [0.5, -0.2, 0.0], [0.5, 0.2, 0.0]);
    let problem = PlppProblem::new(&world, Layout::Single(0), PlppParams::default(), &path, &meter).unwrap();
    let (_, g) = problem.objective_and_gradient(&problem.pack(&path)).unwrap();
    assert!(g.amax() < 1e-9);
    let (out, report) = optimize(&problem, &path).unwrap();
    assert!(report.iterations <= 2);
    let shift = out
        .waypoints
        .iter()
        .zip(&path.waypoints)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(shift < 1e-6, "shift {shift}");
}

#[test]
fn jerky_free_path_approaches_the_straight_value() {
    let world = planar_world();
    let meter = DistanceMeter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (from, to) = ([0.55, -0.25, 0.0], [0.45, 0.2, 0.5]);
    let n = 20;
    for _ in 0..5 {
        let straight = line(n, from, to);
        let mut w = straight.waypoints.clone();
        for q in &mut w[1..n - 1] {
            for v in q.iter_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let jerky = JointPath::new(w);
        let problem = PlppProblem::new(&world, Layout::Single(0), PlppParams::default(), &jerky, &meter).unwrap();
        let (_out, report) = optimize(&problem, &jerky).unwrap();
        let dx = (to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2);
        let analytic = 0.5 * (5.0 * dx + (to[2] - from[2]).powi(2)) / (n - 1) as f64;
        assert!(report.initial_length > 2.0 * analytic);
        assert!((report.final_length - analytic).abs() <= 0.05 * analytic, "{} vs {analytic}", report.final_length);
    }
}

/// Planned, simplified and densified left-arm paths on the desk.
fn desk_paths(s: &Scenario, count: usize) -> Vec<JointPath> {
    let meter = DistanceMeter::new();
    let chain = &s.world.arms.left;
    let mode = ClearanceMode::SingleArm(0);
    let space = StateSpace::new(chain.lower_limits(), chain.upper_limits(), 0.001, |q: &[f64]| {
        s.world.is_clear(q, mode, s.config.plan_margin, &meter)
    })
    .unwrap();
    (0..count)
        .map(|k| {
            let query = &s.queries[k % s.queries.len()];
            let params = PlannerParams { seed: k as u64, ..PlannerParams::default() };
            let raw = rrt_connect(&space, &query.start[0], &query.goal[0], &params).unwrap();
            densify(&simplify(&space, &raw, &params), 20)
        })
        .collect()
}

#[test]
fn desk_optimization_invariants() {
    let s = Scenario::desk();
    let meter = DistanceMeter::new();
    let params = PlppParams { d_obs: s.config.plan_margin, ..PlppParams::default() };
    for path in desk_paths(&s, 8) {
        let problem = PlppProblem::new(&s.world, Layout::Single(0), params.clone(), &path, &meter).unwrap();
        let (out, report) = optimize(&problem, &path).unwrap();
        assert_eq!(out.waypoints[0], path.waypoints[0]);
        assert_eq!(out.waypoints.last(), path.waypoints.last());
        assert_eq!(out.len(), path.len());
        assert!(report.final_objective <= report.initial_objective * (1.0 + params.eps_rel));
        for w in report.merit_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "merit rose: {} -> {}", w[0], w[1]);
        }
        if !report.infeasible_start {
            for q in &out.waypoints[1..out.len() - 1] {
                let d = s.world.min_clearance(q, ClearanceMode::SingleArm(0), &meter).unwrap().distance();
                assert!(d >= params.d_obs * (1.0 - 1e-6), "clearance {d}");
            }
        }
    }
}

#[test]
fn rotation_term_uses_shortest_arc() {
    // Half turn plus a little: the log map picks the shorter way round.
    let u = UnitQuat::new_normalize((1.6f64 / 2.0).cos(), Vector3::z() * (1.6f64 / 2.0).sin());
    let w = u.mul(&u);
    assert!((log_map(&w).norm() - (2.0 * std::f64::consts::PI - 3.2)).abs() < 1e-12);
}
