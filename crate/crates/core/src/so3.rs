//! Unit quaternions and the pieces of SO(3) tangent-space algebra needed by
//! the rotational path-length objective: relative rotations with shortest-arc
//! selection, the logarithmic map, and the inverse of the exponential-map
//! Jacobian.
//!
//! Quaternions are stored scalar-first as `[a, v]`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotation vector (axis times angle, radians).
pub type RotationVector = Vector3<f64>;

/// Orthonormal 3×3 rotation matrix.
pub type RotationMatrix = Matrix3<f64>;

/// Below this angle the closed forms of the log map and of `T⁻¹` are replaced
/// by their series expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Largest tolerated deviation from unit norm for inputs to [`quat_relative`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Quaternion with scalar part `a` and imaginary part `v`, kept at unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub a: f64,
    pub v: Vector3<f64>,
}

impl UnitQuat {
    pub fn identity() -> Self {
        Self { a: 1.0, v: Vector3::zeros() }
    }

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new_normalize(a: f64, v: Vector3<f64>) -> Self {
        let n = (a * a + v.norm_squared()).sqrt();
        Self { a: a / n, v: v / n }
    }

    /// Builds a quaternion without normalizing. Used for values that are unit
    /// by construction.
    pub fn from_parts_unchecked(a: f64, v: Vector3<f64>) -> Self {
        Self { a, v }
    }

    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.v.norm_squared()).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.a * other.a + self.v.dot(&other.v)
    }

    pub fn conjugate(&self) -> Self {
        Self { a: self.a, v: -self.v }
    }

    pub fn neg(&self) -> Self {
        Self { a: -self.a, v: -self.v }
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        Self { a: self.a * rhs.a - self.v.dot(&rhs.v), v: rhs.v * self.a + self.v * rhs.a + self.v.cross(&rhs.v) }
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.a, self.v.x, self.v.y, self.v.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Shepperd's method: picks the largest of the four squared components to
    /// divide by, so the conversion is stable for every rotation.
    pub fn from_rotation_matrix(m: &RotationMatrix) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            (0.25 * s, (m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s)
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            ((m[(2, 1)] - m[(1, 2)]) / s, 0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s)
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            ((m[(0, 2)] - m[(2, 0)]) / s, (m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s)
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            ((m[(1, 0)] - m[(0, 1)]) / s, (m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s)
        };
        Self::new_normalize(q.0, Vector3::new(q.1, q.2, q.3))
    }
}

fn check_unit(u: &UnitQuat) -> Result<()> {
    let n = u.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidInput(format!("quaternion norm {n} is not unit")));
    }
    Ok(())
}

/// Rotation from `from` to `to`, expressed in the `from` frame, along the
/// shorter of the two arcs. The scalar part of the result is non-negative.
pub fn quat_relative(from: &UnitQuat, to: &UnitQuat) -> Result<UnitQuat> {
    check_unit(from)?;
    check_unit(to)?;
    let to = if from.dot(to) < 0.0 { to.neg() } else { *to };
    let mut rel = from.conjugate().mul(&to);
    // The dot product test already makes this non-negative up to rounding.
    if rel.a < 0.0 {
        rel = rel.neg();
    }
    Ok(rel)
}

/// Logarithmic map of a unit quaternion to its rotation vector.
pub fn log_map(u: &UnitQuat) -> RotationVector {
    let (a, v) = if u.a < 0.0 { (-u.a, -u.v) } else { (u.a, u.v) };
    let s = v.norm();
    if s < SMALL_ANGLE {
        // 2·asin(s)/s = 2·(1 + s²/6 + 3s⁴/40 + …)
        let s2 = s * s;
        return v * (2.0 * (1.0 + s2 / 6.0 + 3.0 * s2 * s2 / 40.0));
    }
    let half_angle = s.atan2(a);
    v * (2.0 * half_angle / s)
}

/// Cross-product (skew-symmetric) matrix of `p`.
pub fn skew(p: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0)
}

/// Inverse of the exponential-map Jacobian, `T⁻¹(p)`, mapping infinitesimal
/// rotations (applied on the left, world side) to rotation-vector increments.
pub fn inv_exp_jacobian(p: &RotationVector) -> Result<Matrix3<f64>> {
    let theta = p.norm();
    let tau = 2.0 * std::f64::consts::PI;
    if theta >= tau - 1e-6 {
        return Err(Error::SingularRotation(theta));
    }
    let pt = skew(p);
    let pt2 = pt * pt;
    let coeff = if theta < SMALL_ANGLE {
        1.0 / 12.0
    } else {
        let half = 0.5 * theta;
        let gamma = half / half.tan();
        (1.0 - gamma) / (theta * theta)
    };
    Ok(Matrix3::identity() - pt * 0.5 + pt2 * coeff)
}
