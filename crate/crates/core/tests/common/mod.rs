//! Oracles shared by the integration tests.
#![allow(dead_code)]

use dualarm_core::planner::JointPath;
use dualarm_core::plpp::{Layout, PlppParams, PlppProblem};
use dualarm_core::ssv::{CollisionWorld, DistanceMeter, Skeleton, SsvPrimitive};
use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type V3 = Vector3<f64>;

pub fn point_segment(p: &V3, a: &V3, b: &V3) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

pub fn point_triangle(p: &V3, a: &V3, b: &V3, c: &V3) -> f64 {
    let n = (b - a).cross(&(c - a));
    if n.norm() > 1e-12 {
        let n = n.normalize();
        let proj = p - n * (p - a).dot(&n);
        // Inside test with signed areas.
        let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, v)| (*v - *u).cross(&(proj - *u)).dot(&n) >= 0.0);
        if inside {
            return (p - proj).norm();
        }
    }
    point_segment(p, a, b).min(point_segment(p, b, c)).min(point_segment(p, c, a))
}

/// Exact distance from a point to a skeleton.
pub fn point_skeleton(p: &V3, s: &Skeleton) -> f64 {
    match s {
        Skeleton::Point(a) => (p - a).norm(),
        Skeleton::Line(a, b) => point_segment(p, a, b),
        Skeleton::Triangle(a, b, c) => point_triangle(p, a, b, c),
    }
}

/// Point on a skeleton at parameters (u, v) in the unit square; triangles
/// fold the upper half back.
pub fn sample(s: &Skeleton, u: f64, v: f64) -> V3 {
    match s {
        Skeleton::Point(a) => *a,
        Skeleton::Line(a, b) => a + (b - a) * u,
        Skeleton::Triangle(a, b, c) => {
            let (u, v) = if u + v > 1.0 { (1.0 - u, 1.0 - v) } else { (u, v) };
            a + (b - a) * u + (c - a) * v
        }
    }
}

/// Minimum skeleton distance by dense sampling of `a` against the exact
/// point distance to `b`, refined on a finer grid around the best sample.
pub fn sampled_distance(a: &Skeleton, b: &Skeleton) -> f64 {
    let dims = match a {
        Skeleton::Point(_) => 0,
        Skeleton::Line(..) => 1,
        Skeleton::Triangle(..) => 2,
    };
    let f = |u: f64, v: f64| point_skeleton(&sample(a, u, v), b);
    if dims == 0 {
        return f(0.0, 0.0);
    }
    let n = if dims == 1 { 2000 } else { 160 };
    let grid = |u0: f64, v0: f64, span: f64, n: usize| {
        let mut best = (f64::INFINITY, u0, v0);
        let vn = if dims == 1 { 0 } else { n };
        for i in 0..=n {
            for j in 0..=vn {
                let u = (u0 + span * (i as f64 / n as f64 - 0.5)).clamp(0.0, 1.0);
                let v = if dims == 1 { 0.0 } else { (v0 + span * (j as f64 / n as f64 - 0.5)).clamp(0.0, 1.0) };
                let d = f(u, v);
                if d < best.0 {
                    best = (d, u, v);
                }
            }
        }
        best
    };
    let mut best = grid(0.5, 0.5, 1.0, n);
    let mut span = 4.0 / n as f64;
    for _ in 0..4 {
        let next = grid(best.1, best.2, span, 40);
        if next.0 < best.0 {
            best = next;
        }
        span /= 10.0;
    }
    best.0
}

pub fn random_v3(rng: &mut ChaCha8Rng, scale: f64) -> V3 {
    V3::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

pub fn random_primitive(rng: &mut ChaCha8Rng) -> SsvPrimitive {
    let center = random_v3(rng, 0.5);
    let r = rng.gen_range(0.0..0.1);
    match rng.gen_range(0..3) {
        0 => SsvPrimitive::sphere(center, r),
        1 => SsvPrimitive::capsule(center + random_v3(rng, 0.3), center + random_v3(rng, 0.3), r),
        _ => SsvPrimitive::rounded_triangle(
            center + random_v3(rng, 0.3),
            center + random_v3(rng, 0.3),
            center + random_v3(rng, 0.3),
            r,
        ),
    }
}

/// Jerky straight-line path with `n` waypoints inside the joint limits.
pub fn random_path(world: &CollisionWorld, layout: Layout, n: usize, rng: &mut ChaCha8Rng) -> JointPath {
    let (lower, upper) = match layout {
        Layout::Single(a) => (world.arms.arm(a).lower_limits(), world.arms.arm(a).upper_limits()),
        Layout::Composite => (world.arms.lower_limits(), world.arms.upper_limits()),
    };
    let pick = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lower.iter().zip(&upper).map(|(l, u)| rng.gen_range(l + 0.2..u - 0.2)).collect()
    };
    let a = pick(rng);
    let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-0.8..0.8)).collect();
    JointPath::new(
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                let noise = if k == 0 || k == n - 1 { 0.0 } else { 0.1 };
                a.iter()
                    .zip(&b)
                    .zip(lower.iter().zip(&upper))
                    .map(|((x, y), (l, u))| (x + t * (y - x) + rng.gen_range(-noise..=noise)).clamp(*l, *u))
                    .collect()
            })
            .collect(),
    )
}

/// Relative error (in norm) of the analytic objective gradient against
/// forward differences with step `h`.
pub fn gradient_error(problem: &PlppProblem, path: &JointPath, h: f64) -> f64 {
    let z = problem.pack(path);
    let (f, g) = problem.objective_and_gradient(&z).unwrap();
    let mut fd = DVector::zeros(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        zp[i] = z[i] + h;
        fd[i] = (problem.unscaled_objective(&zp).unwrap() / problem.scale - f) / h;
        zp[i] = z[i];
    }
    (&g - &fd).norm() / fd.norm()
}

/// Relative error of the clearance-constraint row at configuration `q`
/// against central differences with step `h`, or `None` when the one-sided
/// slopes disagree (a witness switch).
pub fn constraint_error(world: &CollisionWorld, arm: usize, q: &[f64], d_obs: f64, h: f64) -> Option<f64> {
    let meter = DistanceMeter::new();
    let path = JointPath::new(vec![q.to_vec(), q.to_vec(), q.to_vec()]);
    let params = PlppParams { d_obs, ..PlppParams::default() };
    let problem = PlppProblem::new(world, Layout::Single(arm), params, &path, &meter).unwrap();
    let z = problem.pack(&path);
    let (_, rows) = problem.constraints_and_jacobian(&z).unwrap();
    let g = |z: &DVector<f64>| problem.evaluate(z, false).unwrap().constraints[0];
    let g0 = g(&z);
    let mut fd = DVector::zeros(z.len());
    for i in 0..z.len() {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[i] += h;
        zm[i] -= h;
        let (gp, gm) = (g(&zp), g(&zm));
        if ((gp - g0) - (g0 - gm)).abs() > 1e-3 * ((gp - g0).abs() + (g0 - gm).abs()) + 1e-12 {
            return None;
        }
        fd[i] = (gp - gm) / (2.0 * h);
    }
    Some((&rows[0] - &fd).norm() / fd.norm().max(1e-12))
}
