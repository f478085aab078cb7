use dualarm_core::planner::{densify, dist, rrt_connect, simplify, JointPath, PlannerParams, StateSpace};
use dualarm_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unit square with a wall at x ∈ [0.45, 0.55] open for y ∈ [0.8, 0.9],
/// plus a disc in the left half.
fn corridor(q: &[f64]) -> bool {
    let in_wall = (0.45..=0.55).contains(&q[0]) && !(0.8..=0.9).contains(&q[1]);
    let in_disc = (q[0] - 0.2).powi(2) + (q[1] - 0.5).powi(2) < 0.1f64.powi(2);
    !in_wall && !in_disc
}

fn space(fraction: f64) -> StateSpace<'static> {
    StateSpace::new(vec![0.0, 0.0], vec![1.0, 1.0], fraction, corridor).unwrap()
}

fn params(seed: u64) -> PlannerParams {
    PlannerParams { seed, longest_valid_segment_fraction: 0.005, ..PlannerParams::default() }
}

/// How far `q` lies inside the corridor obstacles; zero when free.
fn depth(q: &[f64]) -> f64 {
    let rect = |x0: f64, x1: f64, y0: f64, y1: f64| {
        if q[0] >= x0 && q[0] <= x1 && q[1] >= y0 && q[1] <= y1 {
            (q[0] - x0).min(x1 - q[0]).min(q[1] - y0).min(y1 - q[1])
        } else {
            0.0
        }
    };
    let disc = 0.1 - ((q[0] - 0.2).powi(2) + (q[1] - 0.5).powi(2)).sqrt();
    rect(0.45, 0.55, -1.0, 0.8).max(rect(0.45, 0.55, 0.9, 2.0)).max(disc).max(0.0)
}

/// Samples each segment at ten times the planner's resolution. Between two
/// checks a segment can only clip an obstacle by half the check spacing, so
/// shallower penetrations are tolerated.
fn fine_valid(path: &JointPath, resolution: f64) -> bool {
    let step = resolution / 10.0;
    path.waypoints.windows(2).all(|w| {
        let n = (dist(&w[0], &w[1]) / step).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let t = k as f64 / n as f64;
            depth(&[w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]) <= 0.5 * resolution
        })
    })
}

#[test]
fn corridor_paths_pass_the_fine_validator() {
    let s = space(0.005);
    for seed in 0..20 {
        let p = params(seed);
        let path = rrt_connect(&s, &[0.1, 0.1], &[0.9, 0.1], &p).unwrap();
        assert_eq!(path.waypoints[0], vec![0.1, 0.1]);
        assert_eq!(path.waypoints.last().unwrap(), &vec![0.9, 0.1]);
        assert!(s.path_valid(&path));
        assert!(fine_valid(&path, s.resolution()));
        let short = simplify(&s, &path, &p);
        assert!(fine_valid(&short, s.resolution()));
        assert!(short.length() <= path.length() + 1e-12);
    }
}

#[test]
fn planning_is_deterministic_per_seed() {
    let s = space(0.005);
    let a = rrt_connect(&s, &[0.1, 0.1], &[0.9, 0.1], &params(7)).unwrap();
    let b = rrt_connect(&s, &[0.1, 0.1], &[0.9, 0.1], &params(7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(simplify(&s, &a, &params(7)), simplify(&s, &b, &params(7)));
}

#[test]
fn free_space_simplifies_to_the_endpoints() {
    let s = StateSpace::new(vec![0.0; 3], vec![1.0; 3], 0.01, |_: &[f64]| true).unwrap();
    let p = params(1);
    let path = rrt_connect(&s, &[0.1, 0.2, 0.3], &[0.9, 0.8, 0.7], &p).unwrap();
    let short = simplify(&s, &path, &p);
    assert_eq!(short.waypoints, vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.8, 0.7]]);
    assert_eq!(simplify(&s, &short, &p), short);
}

#[test]
fn invalid_endpoints_are_precondition_errors() {
    let s = space(0.005);
    let e = rrt_connect(&s, &[0.5, 0.1], &[0.9, 0.1], &params(0)).unwrap_err();
    assert!(matches!(e, Error::Precondition(_)));
    let e = rrt_connect(&s, &[0.1, 0.1], &[0.2, 0.5], &params(0)).unwrap_err();
    assert!(matches!(e, Error::Precondition(_)));
}

#[test]
fn sealed_wall_is_a_planning_failure() {
    let s = StateSpace::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.005, |q: &[f64]| !(0.45..=0.55).contains(&q[0])).unwrap();
    let p = PlannerParams { max_iterations: 500, ..params(0) };
    let e = rrt_connect(&s, &[0.1, 0.1], &[0.9, 0.1], &p).unwrap_err();
    assert!(matches!(e, Error::PlanningFailure { .. }));
}

#[test]
fn segment_check_counts() {
    let s = space(0.01);
    assert_eq!(s.check_count(0.0), 1);
    assert!(s.segment_valid(&[0.1, 0.1], &[0.1, 0.1]));
    // Crosses the wall, which is thicker than the resolution.
    assert!(!s.segment_valid(&[0.3, 0.1], &[0.7, 0.1]));
    let halved = space(0.005);
    for len in [0.013, 0.1, 0.77, 1.3] {
        assert!(halved.check_count(len) <= 2 * s.check_count(len) + 1);
    }
}

#[test]
fn random_jerky_paths_simplify_soundly() {
    let s = space(0.005);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    while done < 100 {
        // Random walk in the left chamber, rejected if any segment is invalid.
        let mut w = vec![vec![0.05, 0.05]];
        for _ in 0..15 {
            let last = w.last().unwrap();
            let next = vec![
                (last[0] + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 0.44),
                (last[1] + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 1.0),
            ];
            w.push(next);
        }
        let path = JointPath::new(w);
        if !s.path_valid(&path) {
            continue;
        }
        done += 1;
        let short = simplify(&s, &path, &params(done));
        assert!(s.path_valid(&short));
        assert!(short.length() <= path.length() + 1e-12);
        assert_eq!(short.waypoints[0], path.waypoints[0]);
        assert_eq!(short.waypoints.last(), path.waypoints.last());
    }
}

#[test]
fn collinear_middle_waypoint_is_removed() {
    let s = StateSpace::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.01, |_: &[f64]| true).unwrap();
    let path = JointPath::new(vec![vec![0.1, 0.9], vec![0.4, 0.9], vec![0.7, 0.9]]);
    let short = simplify(&s, &path, &params(0));
    assert_eq!(short.waypoints, vec![vec![0.1, 0.9], vec![0.7, 0.9]]);
}

#[test]
fn densify_two_waypoints_to_twenty() {
    let path = JointPath::new(vec![vec![0.0, 0.0], vec![1.9, -3.8]]);
    let d = densify(&path, 20);
    assert_eq!(d.len(), 20);
    for (k, w) in d.waypoints.iter().enumerate() {
        let t = k as f64 / 19.0;
        assert!((w[0] - 1.9 * t).abs() < 1e-12 && (w[1] + 3.8 * t).abs() < 1e-12);
    }
    let long = JointPath::new((0..25).map(|k| vec![k as f64]).collect());
    assert_eq!(densify(&long, 20), long);
}

proptest! {
    #[test]
    fn densify_preserves_waypoints_and_length(
        pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..10),
        min in 2usize..40,
    ) {
        let path = JointPath::new(pts.iter().map(|&(x, y)| vec![x, y]).collect());
        let d = densify(&path, min);
        prop_assert_eq!(d.len(), path.len().max(min));
        prop_assert!((d.length() - path.length()).abs() < 1e-9);
        // Original waypoints appear in order.
        let mut it = d.waypoints.iter();
        for w in &path.waypoints {
            prop_assert!(it.any(|x| x == w));
        }
    }
}
