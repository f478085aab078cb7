//! Swept-sphere volumes: a sphere of fixed radius swept over a point, a line
//! segment, or a triangle. The distance between two volumes is the distance
//! between their skeletons minus the two radii.

mod geometry;
pub mod meter;
pub mod world;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Frame;

pub use meter::DistanceMeter;
pub use world::{ClearanceMode, CollisionWorld, PairId, Part, Scene};

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "points", rename_all = "lowercase")]
pub enum Skeleton {
    Point(V3),
    Line(V3, V3),
    Triangle(V3, V3, V3),
}

impl Skeleton {
    fn rank(&self) -> u8 {
        match self {
            Skeleton::Point(_) => 0,
            Skeleton::Line(..) => 1,
            Skeleton::Triangle(..) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsvPrimitive {
    pub skeleton: Skeleton,
    pub radius: f64,
}

/// Location of a witness point on a skeleton: which vertex, edge, or face
/// interior realizes the minimum. Used to detect witness switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Vertex(u8),
    Edge(u8),
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    /// Skeleton distance minus both radii; negative when the volumes overlap.
    pub distance: f64,
    pub witness_a: V3,
    pub witness_b: V3,
    /// Unit vector from `witness_b` towards `witness_a`.
    pub normal: V3,
}

impl SsvPrimitive {
    pub fn sphere(center: V3, radius: f64) -> Self {
        Self { skeleton: Skeleton::Point(center), radius }
    }

    pub fn capsule(a: V3, b: V3, radius: f64) -> Self {
        Self { skeleton: Skeleton::Line(a, b), radius }
    }

    pub fn rounded_triangle(a: V3, b: V3, c: V3, radius: f64) -> Self {
        Self { skeleton: Skeleton::Triangle(a, b, c), radius }
    }

    /// Two rounded triangles covering the rectangle `corner + s·edge1 + t·edge2`.
    pub fn rounded_rectangle(corner: V3, edge1: V3, edge2: V3, radius: f64) -> [Self; 2] {
        let far = corner + edge1 + edge2;
        [
            Self::rounded_triangle(corner, corner + edge1, far, radius),
            Self::rounded_triangle(corner, far, corner + edge2, radius),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidInput(format!("SSV radius {} must be positive", self.radius)));
        }
        match &self.skeleton {
            Skeleton::Point(_) => Ok(()),
            Skeleton::Line(a, b) => {
                if (a - b).norm() <= 1e-12 {
                    Err(Error::InvalidInput("line SSV endpoints coincide".into()))
                } else {
                    Ok(())
                }
            }
            Skeleton::Triangle(a, b, c) => {
                let area2 = (b - a).cross(&(c - a)).norm();
                let scale = (b - a).norm().max((c - a).norm()).max(1e-300);
                if area2 <= 1e-12 * scale * scale {
                    Err(Error::InvalidInput("triangle SSV vertices are collinear".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn transformed(&self, frame: &Frame) -> Self {
        let t = |p: &V3| frame.transform_point(p);
        let skeleton = match &self.skeleton {
            Skeleton::Point(p) => Skeleton::Point(t(p)),
            Skeleton::Line(a, b) => Skeleton::Line(t(a), t(b)),
            Skeleton::Triangle(a, b, c) => Skeleton::Triangle(t(a), t(b), t(c)),
        };
        Self { skeleton, radius: self.radius }
    }

    pub fn translated(&self, offset: &V3) -> Self {
        self.transformed(&Frame::from_translation(*offset))
    }

    /// Center and radius of a sphere enclosing the volume.
    pub fn bounding_sphere(&self) -> (V3, f64) {
        let (c, r) = match &self.skeleton {
            Skeleton::Point(p) => (*p, 0.0),
            Skeleton::Line(a, b) => ((a + b) * 0.5, (a - b).norm() * 0.5),
            Skeleton::Triangle(a, b, c) => {
                let m = (a + b + c) / 3.0;
                let r = (a - m).norm().max((b - m).norm()).max((c - m).norm());
                (m, r)
            }
        };
        (c, r + self.radius)
    }

    /// Which feature of the skeleton a witness point lies on.
    pub fn feature_of(&self, w: &V3) -> Feature {
        const TOL: f64 = 1e-9;
        match &self.skeleton {
            Skeleton::Point(_) => Feature::Vertex(0),
            Skeleton::Line(a, b) => {
                if (w - a).norm() < TOL {
                    Feature::Vertex(0)
                } else if (w - b).norm() < TOL {
                    Feature::Vertex(1)
                } else {
                    Feature::Edge(0)
                }
            }
            Skeleton::Triangle(a, b, c) => {
                let verts = [a, b, c];
                for (i, v) in verts.iter().enumerate() {
                    if (w - *v).norm() < TOL {
                        return Feature::Vertex(i as u8);
                    }
                }
                for i in 0..3 {
                    let (p, q) = (verts[i], verts[(i + 1) % 3]);
                    if (geometry::point_segment(w, p, q) - w).norm() < TOL {
                        return Feature::Edge(i as u8);
                    }
                }
                Feature::Face
            }
        }
    }

    /// Closest point on the skeleton to `p`.
    pub fn closest_skeleton_point(&self, p: &V3) -> V3 {
        match &self.skeleton {
            Skeleton::Point(c) => *c,
            Skeleton::Line(a, b) => geometry::point_segment(p, a, b),
            Skeleton::Triangle(a, b, c) => geometry::point_triangle(p, a, b, c),
        }
    }
}

fn flat_coords(s: &SsvPrimitive) -> ([f64; 10], usize) {
    let mut buf = [0.0; 10];
    let pts: &[&V3] = match &s.skeleton {
        Skeleton::Point(p) => &[p],
        Skeleton::Line(p, q) => &[p, q],
        Skeleton::Triangle(p, q, r) => &[p, q, r],
    };
    for (i, p) in pts.iter().enumerate() {
        buf[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
    }
    let n = 3 * pts.len();
    buf[n] = s.radius;
    (buf, n + 1)
}

fn lex_less(a: &SsvPrimitive, b: &SsvPrimitive) -> bool {
    let (fa, n) = flat_coords(a);
    let (fb, _) = flat_coords(b);
    for (x, y) in fa[..n].iter().zip(&fb[..n]) {
        if x != y {
            return x < y;
        }
    }
    false
}

fn skeleton_closest(a: &Skeleton, b: &Skeleton) -> (V3, V3) {
    use Skeleton::*;
    match (a, b) {
        (Point(p), Point(q)) => (*p, *q),
        (Point(p), Line(a, b)) => (*p, geometry::point_segment(p, a, b)),
        (Point(p), Triangle(a, b, c)) => (*p, geometry::point_triangle(p, a, b, c)),
        (Line(p, q), Line(a, b)) => geometry::segment_segment(p, q, a, b),
        (Line(p, q), Triangle(a, b, c)) => geometry::segment_triangle(p, q, &[*a, *b, *c]),
        (Triangle(a, b, c), Triangle(d, e, f)) => geometry::triangle_triangle(&[*a, *b, *c], &[*d, *e, *f]),
        _ => {
            let (wb, wa) = skeleton_closest(b, a);
            (wa, wb)
        }
    }
}

/// Signed distance between two placed swept-sphere volumes.
///
/// The computation is symmetric: swapping the arguments swaps the witnesses,
/// flips the normal, and leaves `distance` bit-identical.
pub fn ssv_distance(a: &SsvPrimitive, b: &SsvPrimitive) -> DistanceResult {
    // Canonical argument order makes the floating-point path independent of
    // which primitive is passed first.
    let swap = match a.skeleton.rank().cmp(&b.skeleton.rank()) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => lex_less(b, a),
    };
    let (first, second) = if swap { (b, a) } else { (a, b) };
    let (w1, w2) = skeleton_closest(&first.skeleton, &second.skeleton);
    let (wa, wb) = if swap { (w2, w1) } else { (w1, w2) };
    let gap = (w1 - w2).norm();
    let diff = wa - wb;
    let normal = if gap > 0.0 { diff / gap } else { fallback_normal(a, b) };
    DistanceResult { distance: gap - (a.radius + b.radius), witness_a: wa, witness_b: wb, normal }
}

fn fallback_normal(a: &SsvPrimitive, b: &SsvPrimitive) -> V3 {
    let (ca, _) = a.bounding_sphere();
    let (cb, _) = b.bounding_sphere();
    let d = ca - cb;
    if d.norm() > 0.0 {
        d.normalize()
    } else {
        V3::z()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_pair() {
        let a = SsvPrimitive::sphere(V3::zeros(), 0.2);
        let b = SsvPrimitive::sphere(V3::new(1.0, 0.0, 0.0), 0.3);
        let r = ssv_distance(&a, &b);
        assert_relative_eq!(r.distance, 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.normal, V3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn sphere_on_capsule_axis_fully_overlaps() {
        let s = SsvPrimitive::sphere(V3::new(0.3, 0.0, 0.0), 0.05);
        let c = SsvPrimitive::capsule(V3::zeros(), V3::new(1.0, 0.0, 0.0), 0.1);
        let r = ssv_distance(&s, &c);
        assert_relative_eq!(r.distance, -0.15, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_primitives_rejected() {
        assert!(SsvPrimitive::capsule(V3::zeros(), V3::zeros(), 0.1).validate().is_err());
        let p = V3::new(1.0, 1.0, 1.0);
        assert!(SsvPrimitive::rounded_triangle(V3::zeros(), p, p * 2.0, 0.1).validate().is_err());
        assert!(SsvPrimitive::sphere(V3::zeros(), 0.0).validate().is_err());
        assert!(SsvPrimitive::sphere(V3::zeros(), 0.1).validate().is_ok());
    }

    #[test]
    fn rectangle_is_two_triangles() {
        let [t1, t2] =
            SsvPrimitive::rounded_rectangle(V3::zeros(), V3::new(2.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0), 0.01);
        let probe = SsvPrimitive::sphere(V3::new(1.9, 0.9, 0.5), 0.1);
        let d = ssv_distance(&t1, &probe).distance.min(ssv_distance(&t2, &probe).distance);
        assert_relative_eq!(d, 0.39, epsilon = 1e-12);
    }

    #[test]
    fn features_of_witnesses() {
        let tri = SsvPrimitive::rounded_triangle(V3::zeros(), V3::x(), V3::y(), 0.1);
        assert_eq!(tri.feature_of(&V3::zeros()), Feature::Vertex(0));
        assert_eq!(tri.feature_of(&V3::new(0.5, 0.0, 0.0)), Feature::Edge(0));
        assert_eq!(tri.feature_of(&V3::new(0.2, 0.2, 0.0)), Feature::Face);
    }
}
