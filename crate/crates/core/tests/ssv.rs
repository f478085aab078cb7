use dualarm_core::kinematics::{DualArm, Frame, LinkBody, RevoluteJoint, SerialChain};
use dualarm_core::ssv::{ssv_distance, ClearanceMode, CollisionWorld, DistanceMeter, Scene, Skeleton, SsvPrimitive};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{random_primitive, random_v3, sampled_distance, V3};

#[test]
fn pair_distances_match_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_primitive(&mut rng);
        let b = random_primitive(&mut rng);
        let d = ssv_distance(&a, &b);
        // Sample the lower-rank skeleton; the oracle is exact on the other.
        let (s, t) = if matches!(a.skeleton, Skeleton::Triangle(..)) { (&b, &a) } else { (&a, &b) };
        let oracle = sampled_distance(&s.skeleton, &t.skeleton) - a.radius - b.radius;
        worst = worst.max((d.distance - oracle).abs());
        assert!((d.distance - oracle).abs() < 1e-3, "{a:?} {b:?}: {} vs {oracle}", d.distance);
        // The witnesses realize the reported distance.
        let gap = (d.witness_a - d.witness_b).norm() - a.radius - b.radius;
        assert!((gap - d.distance).abs() < 1e-9);
    }
    assert!(worst < 1e-3);
}

#[test]
fn contained_and_degenerate_pairs() {
    let s = SsvPrimitive::sphere(V3::zeros(), 0.5);
    let inner = SsvPrimitive::sphere(V3::new(0.1, 0.0, 0.0), 0.1);
    assert!((ssv_distance(&s, &inner).distance + 0.5).abs() < 1e-12);
    // Segment piercing a triangle: skeleton distance zero.
    let tri = SsvPrimitive::rounded_triangle(V3::zeros(), V3::x(), V3::y(), 0.0);
    let seg = SsvPrimitive::capsule(V3::new(0.2, 0.2, -1.0), V3::new(0.2, 0.2, 1.0), 0.0);
    assert!(ssv_distance(&tri, &seg).distance.abs() < 1e-12);
    // Parallel segments.
    let a = SsvPrimitive::capsule(V3::zeros(), V3::x(), 0.1);
    let b = SsvPrimitive::capsule(V3::new(0.5, 1.0, 0.0), V3::new(2.0, 1.0, 0.0), 0.1);
    assert!((ssv_distance(&a, &b).distance - 0.8).abs() < 1e-12);
}

fn one_link_chain(name: &str, base_y: f64, rng: &mut ChaCha8Rng) -> SerialChain {
    let joints = (0..2)
        .map(|k| RevoluteJoint {
            origin: Frame::from_xyz_rpy([0.0, 0.0, 0.2 * k as f64], [0.0, 0.0, 0.0]),
            axis: if k == 0 { V3::z() } else { V3::y() },
            lower: -3.0,
            upper: 3.0,
            max_velocity: 1.0,
            max_acceleration: 1.0,
        })
        .collect();
    let bodies = (0..4)
        .map(|i| LinkBody { link: 1 + i % 2, shape: random_primitive(rng).translated(&V3::new(0.0, 0.0, 0.1)) })
        .collect();
    SerialChain {
        name: name.into(),
        base: Frame::from_translation(V3::new(0.0, base_y, 0.0)),
        joints,
        tcp: Frame::identity(),
        ee_link: 2,
        bodies,
        self_exclusions: vec![(0, 1), (1, 2)],
    }
}

#[test]
fn scene_minimum_equals_exhaustive_pair_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let meter = DistanceMeter::new();
    for _ in 0..100 {
        let left = one_link_chain("left", 0.4, &mut rng);
        let right = one_link_chain("right", -0.4, &mut rng);
        let obstacles = (0..6).map(|_| random_primitive(&mut rng).translated(&random_v3(&mut rng, 1.0))).collect();
        let world = CollisionWorld::new(DualArm::new(left, right), Scene::new(obstacles)).unwrap();
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for mode in [ClearanceMode::Full, ClearanceMode::RobotRobotOnly] {
            let c = world.min_clearance(&q, mode, &meter).unwrap();
            let placement = world.place(&q, mode).unwrap();
            let exhaustive = world
                .pairs(mode)
                .iter()
                .map(|p| ssv_distance(world.placed(&placement, p.a), world.placed(&placement, p.b)).distance)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(c.distance(), exhaustive);
        }
        for arm in 0..2 {
            let mode = ClearanceMode::SingleArm(arm);
            let c = world.min_clearance(&q[2 * arm..2 * arm + 2], mode, &meter).unwrap();
            let placement = world.place(&q[2 * arm..2 * arm + 2], mode).unwrap();
            let exhaustive = world
                .pairs(mode)
                .iter()
                .map(|p| ssv_distance(world.placed(&placement, p.a), world.placed(&placement, p.b)).distance)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(c.distance(), exhaustive);
        }
    }
}

fn arb_v3() -> impl Strategy<Value = V3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| V3::new(x, y, z))
}

fn arb_primitive() -> impl Strategy<Value = SsvPrimitive> {
    (0..3usize, arb_v3(), arb_v3(), arb_v3(), 0.0..0.2f64).prop_map(|(k, a, b, c, r)| match k {
        0 => SsvPrimitive::sphere(a, r),
        1 => SsvPrimitive::capsule(a, b, r),
        _ => SsvPrimitive::rounded_triangle(a, b, c, r),
    })
}

proptest! {
    #[test]
    fn distance_is_symmetric(a in arb_primitive(), b in arb_primitive()) {
        let ab = ssv_distance(&a, &b);
        let ba = ssv_distance(&b, &a);
        prop_assert!((ab.distance - ba.distance).abs() < 1e-12);
    }

    #[test]
    fn distance_is_translation_invariant(a in arb_primitive(), b in arb_primitive(), t in arb_v3()) {
        let d0 = ssv_distance(&a, &b).distance;
        let d1 = ssv_distance(&a.translated(&t), &b.translated(&t)).distance;
        prop_assert!((d0 - d1).abs() < 1e-9);
    }

    #[test]
    fn growing_a_radius_shrinks_the_distance(a in arb_primitive(), b in arb_primitive(), dr in 0.0..0.5f64) {
        let mut grown = a;
        grown.radius += dr;
        let d0 = ssv_distance(&a, &b).distance;
        let d1 = ssv_distance(&grown, &b).distance;
        prop_assert!((d0 - dr - d1).abs() < 1e-12);
    }
}
