//! Serial-chain forward kinematics and geometric Jacobians.
//!
//! Link 0 is the base link, rigidly attached at `base`. Link `k` (1-based) is
//! the body carried by joint `k`. The end-effector frame is the frame of
//! `ee_link` composed with the fixed `tcp` offset.

use nalgebra::{Matrix3, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::UnitQuat;
use crate::ssv::SsvPrimitive;

/// Rigid transform: `p_parent = rotation · p_child + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Frame {
    fn default() -> Self {
        Self::identity()
    }
}

impl Frame {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// URDF-style origin: translation `xyz`, fixed-axis roll/pitch/yaw.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let rz = axis_rotation(&Vector3::z(), rpy[2]);
        let ry = axis_rotation(&Vector3::y(), rpy[1]);
        let rx = axis_rotation(&Vector3::x(), rpy[0]);
        Self { rotation: rz * ry * rx, translation: Vector3::from(xyz) }
    }

    pub fn compose(&self, child: &Frame) -> Frame {
        Frame {
            rotation: self.rotation * child.rotation,
            translation: self.translation + self.rotation * child.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Rotation by `angle` about the unit vector `axis` (Rodrigues).
pub fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = crate::so3::skew(axis);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevoluteJoint {
    /// Fixed transform from the parent link frame to the joint frame at zero angle.
    pub origin: Frame,
    /// Unit rotation axis in the joint frame.
    pub axis: Vector3<f64>,
    pub lower: f64,
    pub upper: f64,
    pub max_velocity: f64,
    pub max_acceleration: f64,
}

/// SSV primitive rigidly attached to a link, in link-local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBody {
    pub link: usize,
    pub shape: SsvPrimitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialChain {
    pub name: String,
    pub base: Frame,
    pub joints: Vec<RevoluteJoint>,
    pub tcp: Frame,
    pub ee_link: usize,
    pub bodies: Vec<LinkBody>,
    /// Same-chain link pairs never checked against each other. Stored with the
    /// smaller index first.
    pub self_exclusions: Vec<(usize, usize)>,
}

/// End-effector pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub x: Vector3<f64>,
    pub u: UnitQuat,
    pub rotation: Matrix3<f64>,
}

/// Forward kinematics output for one configuration.
#[derive(Debug, Clone)]
pub struct ChainState {
    /// World frame of every link, index 0 = base.
    pub links: Vec<Frame>,
    /// World-frame rotation axis of each joint.
    pub axes: Vec<Vector3<f64>>,
    pub ee: EePose,
}

impl ChainState {
    /// Joint origin of joint `j` (0-based) in the world frame.
    pub fn joint_origin(&self, j: usize) -> Vector3<f64> {
        self.links[j + 1].translation
    }

    /// Translational Jacobian of a world point rigidly attached to `link`.
    /// Columns of joints that do not move `link` are zero.
    pub fn point_jacobian(&self, link: usize, point: &Vector3<f64>) -> Matrix3xX<f64> {
        let n = self.axes.len();
        let mut jac = Matrix3xX::zeros(n);
        for j in 0..link.min(n) {
            let col = self.axes[j].cross(&(point - self.joint_origin(j)));
            jac.set_column(j, &col);
        }
        jac
    }
}

impl SerialChain {
    pub fn n_dof(&self) -> usize {
        self.joints.len()
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.upper).collect()
    }

    pub fn velocity_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.max_velocity).collect()
    }

    pub fn acceleration_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.max_acceleration).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.n_dof() && self.joints.iter().zip(q).all(|(j, &v)| v >= j.lower && v <= j.upper)
    }

    /// Checks the structural invariants of a loaded chain.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_dof();
        if n == 0 || n > 7 {
            return Err(Error::InvalidInput(format!("{}: {n} joints, expected 1..=7", self.name)));
        }
        if self.ee_link > n {
            return Err(Error::InvalidInput(format!("{}: ee_link {} > {n}", self.name, self.ee_link)));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let finite = [j.lower, j.upper, j.max_velocity, j.max_acceleration].iter().all(|v| v.is_finite());
            if !finite || j.lower >= j.upper || j.max_velocity <= 0.0 || j.max_acceleration <= 0.0 {
                return Err(Error::InvalidInput(format!("{}: bad limits on joint {}", self.name, i + 1)));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("{}: joint {} axis not unit", self.name, i + 1)));
            }
        }
        for b in &self.bodies {
            if b.link > n {
                return Err(Error::InvalidInput(format!("{}: body on missing link {}", self.name, b.link)));
            }
            b.shape.validate()?;
        }
        Ok(())
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_dof() {
            return Err(Error::InvalidInput(format!(
                "{}: configuration has {} values, chain has {} joints",
                self.name,
                q.len(),
                self.n_dof()
            )));
        }
        Ok(())
    }

    /// Forward kinematics of every link and the end-effector.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<ChainState> {
        self.check_dim(q)?;
        let mut links = Vec::with_capacity(q.len() + 1);
        let mut axes = Vec::with_capacity(q.len());
        let mut frame = self.base;
        links.push(frame);
        for (joint, &angle) in self.joints.iter().zip(q) {
            let jf = frame.compose(&joint.origin);
            axes.push(jf.rotation * joint.axis);
            frame = Frame { rotation: jf.rotation * axis_rotation(&joint.axis, angle), translation: jf.translation };
            links.push(frame);
        }
        let ee_frame = links[self.ee_link].compose(&self.tcp);
        let ee = EePose {
            x: ee_frame.translation,
            u: UnitQuat::from_rotation_matrix(&ee_frame.rotation),
            rotation: ee_frame.rotation,
        };
        Ok(ChainState { links, axes, ee })
    }

    /// Geometric end-effector Jacobian in the world frame, `(J_trans, J_rot)`.
    pub fn jacobian(&self, q: &[f64]) -> Result<(Matrix3xX<f64>, Matrix3xX<f64>)> {
        let state = self.forward_kinematics(q)?;
        Ok(ee_jacobian(self, &state))
    }

    /// Upper bound on how far any point of the end-effector can move per
    /// radian of joint motion (sum of distances from each joint origin to the
    /// furthest downstream point).
    pub fn reach(&self) -> f64 {
        let mut offsets: Vec<f64> = self.joints.iter().map(|j| j.origin.translation.norm()).collect();
        offsets.push(self.tcp.translation.norm());
        (0..self.n_dof()).map(|j| offsets[j + 1..].iter().sum::<f64>()).sum()
    }
}

/// End-effector Jacobian from an already computed chain state.
pub fn ee_jacobian(chain: &SerialChain, state: &ChainState) -> (Matrix3xX<f64>, Matrix3xX<f64>) {
    let n = chain.n_dof();
    let trans = state.point_jacobian(chain.ee_link, &state.ee.x);
    let mut rot = Matrix3xX::zeros(n);
    for j in 0..chain.ee_link.min(n) {
        rot.set_column(j, &state.axes[j]);
    }
    (trans, rot)
}

/// Two chains planned as one composite robot. Composite configurations are
/// the left configuration followed by the right one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualArm {
    pub left: SerialChain,
    pub right: SerialChain,
}

impl DualArm {
    pub fn new(left: SerialChain, right: SerialChain) -> Self {
        Self { left, right }
    }

    pub fn n_dof(&self) -> usize {
        self.left.n_dof() + self.right.n_dof()
    }

    pub fn arm(&self, index: usize) -> &SerialChain {
        if index == 0 {
            &self.left
        } else {
            &self.right
        }
    }

    pub fn split<'a>(&self, q: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if q.len() != self.n_dof() {
            return Err(Error::InvalidInput(format!(
                "composite configuration has {} values, expected {}",
                q.len(),
                self.n_dof()
            )));
        }
        Ok(q.split_at(self.left.n_dof()))
    }

    pub fn join(&self, left: &[f64], right: &[f64]) -> Result<Vec<f64>> {
        if left.len() != self.left.n_dof() || right.len() != self.right.n_dof() {
            return Err(Error::InvalidInput("per-arm configuration length mismatch".into()));
        }
        Ok(left.iter().chain(right).copied().collect())
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        let mut v = self.left.lower_limits();
        v.extend(self.right.lower_limits());
        v
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        let mut v = self.left.upper_limits();
        v.extend(self.right.upper_limits());
        v
    }

    pub fn velocity_limits(&self) -> Vec<f64> {
        let mut v = self.left.velocity_limits();
        v.extend(self.right.velocity_limits());
        v
    }

    pub fn acceleration_limits(&self) -> Vec<f64> {
        let mut v = self.left.acceleration_limits();
        v.extend(self.right.acceleration_limits());
        v
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        match self.split(q) {
            Ok((l, r)) => self.left.within_limits(l) && self.right.within_limits(r),
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) fn planar_one_joint(length: f64) -> SerialChain {
        SerialChain {
            name: "one".into(),
            base: Frame::identity(),
            joints: vec![RevoluteJoint {
                origin: Frame::identity(),
                axis: Vector3::z(),
                lower: -3.0,
                upper: 3.0,
                max_velocity: 1.0,
                max_acceleration: 1.0,
            }],
            tcp: Frame::from_translation(Vector3::new(length, 0.0, 0.0)),
            ee_link: 1,
            bodies: vec![],
            self_exclusions: vec![],
        }
    }

    #[test]
    fn zero_joint_chain_returns_base() {
        let base = Frame::from_xyz_rpy([0.1, 0.2, 0.3], [0.0, 0.0, 0.5]);
        let chain = SerialChain {
            name: "fixed".into(),
            base,
            joints: vec![],
            tcp: Frame::identity(),
            ee_link: 0,
            bodies: vec![],
            self_exclusions: vec![],
        };
        let s = chain.forward_kinematics(&[]).unwrap();
        assert_eq!(s.ee.x, base.translation);
        assert_relative_eq!(s.ee.rotation, base.rotation, epsilon = 1e-15);
    }

    #[test]
    fn planar_quarter_turn() {
        let chain = planar_one_joint(0.5);
        let s = chain.forward_kinematics(&[FRAC_PI_2]).unwrap();
        assert_relative_eq!(s.ee.x, Vector3::new(0.0, 0.5, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn planar_jacobian_column() {
        let chain = planar_one_joint(0.5);
        let (jt, jr) = chain.jacobian(&[0.0]).unwrap();
        assert_relative_eq!(jt.column(0).into_owned(), Vector3::new(0.0, 0.5, 0.0), epsilon = 1e-15);
        assert_eq!(jr.column(0).into_owned(), Vector3::z());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let chain = planar_one_joint(0.5);
        assert!(matches!(chain.forward_kinematics(&[0.0, 1.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(chain.jacobian(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn composite_split_join() {
        let dual = DualArm::new(planar_one_joint(1.0), planar_one_joint(2.0));
        let (l, r) = dual.split(&[0.1, 0.2]).unwrap();
        assert_eq!((l, r), (&[0.1][..], &[0.2][..]));
        assert_eq!(dual.join(l, r).unwrap(), vec![0.1, 0.2]);
        assert!(dual.split(&[0.1]).is_err());
        assert!(dual.within_limits(&[2.9, -2.9]));
        assert!(!dual.within_limits(&[2.9, -3.1]));
    }
}
