//! Closest points between SSV skeletons (points, segments, triangles).
//!
//! Every routine returns `(witness_on_first, witness_on_second)`.

use nalgebra::Vector3;

type V3 = Vector3<f64>;

pub(crate) fn point_segment(p: &V3, a: &V3, b: &V3) -> V3 {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / denom).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest points of segments `p1q1` and `p2q2`.
pub(crate) fn segment_segment(p1: &V3, q1: &V3, p2: &V3, q2: &V3) -> (V3, V3) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-300;

    let (s, t) = if a <= eps && e <= eps {
        (0.0, 0.0)
    } else if a <= eps {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            // Parallel segments: any s works, pick 0 and fix t below.
            let mut s = if denom > 1e-14 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    (p1 + d1 * s, p2 + d2 * t)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub(crate) fn point_triangle(p: &V3, a: &V3, b: &V3, c: &V3) -> V3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Point where segment `pq` crosses the interior of triangle `abc`, if any.
pub(crate) fn segment_triangle_crossing(p: &V3, q: &V3, a: &V3, b: &V3, c: &V3) -> Option<V3> {
    let n = (b - a).cross(&(c - a));
    let dp = n.dot(&(p - a));
    let dq = n.dot(&(q - a));
    if dp * dq > 0.0 || (dp == 0.0 && dq == 0.0) {
        return None;
    }
    let t = dp / (dp - dq);
    let x = p + (q - p) * t;
    // Inside test via consistent orientation of sub-triangles.
    let s0 = (b - a).cross(&(x - a)).dot(&n);
    let s1 = (c - b).cross(&(x - b)).dot(&n);
    let s2 = (a - c).cross(&(x - c)).dot(&n);
    if s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0 {
        Some(x)
    } else {
        None
    }
}

fn keep_best(best: &mut (V3, V3, f64), cand: (V3, V3)) {
    let d = (cand.0 - cand.1).norm_squared();
    if d < best.2 {
        *best = (cand.0, cand.1, d);
    }
}

pub(crate) fn segment_triangle(p: &V3, q: &V3, tri: &[V3; 3]) -> (V3, V3) {
    if let Some(x) = segment_triangle_crossing(p, q, &tri[0], &tri[1], &tri[2]) {
        return (x, x);
    }
    let mut best = (V3::zeros(), V3::zeros(), f64::INFINITY);
    for e in 0..3 {
        keep_best(&mut best, segment_segment(p, q, &tri[e], &tri[(e + 1) % 3]));
    }
    keep_best(&mut best, (*p, point_triangle(p, &tri[0], &tri[1], &tri[2])));
    keep_best(&mut best, (*q, point_triangle(q, &tri[0], &tri[1], &tri[2])));
    (best.0, best.1)
}

pub(crate) fn triangle_triangle(t1: &[V3; 3], t2: &[V3; 3]) -> (V3, V3) {
    for e in 0..3 {
        let (a, b) = (&t1[e], &t1[(e + 1) % 3]);
        if let Some(x) = segment_triangle_crossing(a, b, &t2[0], &t2[1], &t2[2]) {
            return (x, x);
        }
        let (a, b) = (&t2[e], &t2[(e + 1) % 3]);
        if let Some(x) = segment_triangle_crossing(a, b, &t1[0], &t1[1], &t1[2]) {
            return (x, x);
        }
    }
    let mut best = (V3::zeros(), V3::zeros(), f64::INFINITY);
    for i in 0..3 {
        for j in 0..3 {
            keep_best(&mut best, segment_segment(&t1[i], &t1[(i + 1) % 3], &t2[j], &t2[(j + 1) % 3]));
        }
    }
    for v in t1 {
        keep_best(&mut best, (*v, point_triangle(v, &t2[0], &t2[1], &t2[2])));
    }
    for v in t2 {
        let w = point_triangle(v, &t1[0], &t1[1], &t1[2]);
        keep_best(&mut best, (w, *v));
    }
    (best.0, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn crossing_segments_meet() {
        let (a, b) = segment_segment(
            &V3::new(-1.0, 0.0, 0.0),
            &V3::new(1.0, 0.0, 0.0),
            &V3::new(0.0, -1.0, 0.5),
            &V3::new(0.0, 1.0, 0.5),
        );
        assert_relative_eq!(a, V3::zeros(), epsilon = 1e-15);
        assert_relative_eq!(b, V3::new(0.0, 0.0, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn parallel_segments_distance() {
        let (a, b) = segment_segment(
            &V3::new(0.0, 0.0, 0.0),
            &V3::new(1.0, 0.0, 0.0),
            &V3::new(0.5, 1.0, 0.0),
            &V3::new(2.0, 1.0, 0.0),
        );
        assert_relative_eq!((a - b).norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn point_above_triangle_face() {
        let tri = [V3::zeros(), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
        let w = point_triangle(&V3::new(0.2, 0.2, 3.0), &tri[0], &tri[1], &tri[2]);
        assert_relative_eq!(w, V3::new(0.2, 0.2, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn segment_piercing_triangle() {
        let tri = [V3::zeros(), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
        let (a, b) = segment_triangle(&V3::new(0.2, 0.2, -1.0), &V3::new(0.2, 0.2, 1.0), &tri);
        assert_relative_eq!(a, b);
        assert_relative_eq!(a, V3::new(0.2, 0.2, 0.0), epsilon = 1e-15);
    }
}
