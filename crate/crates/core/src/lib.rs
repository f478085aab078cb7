//! Coordinated dual-arm motion planning.
//!
//! Two pipelines are provided. The centralized pipeline plans both arms as one
//! 14-DoF robot. The decoupled pipeline plans each arm on its own and then
//! resolves robot-robot collisions with fixed-path coordination: both
//! geometric paths are kept and only the rate at which each is traversed
//! changes. Both pipelines can post-process paths with a path-length
//! optimizer that shortens the translational and rotational motion of the
//! end-effectors while keeping a clearance margin.

pub mod coordination;
pub mod error;
pub mod kinematics;
pub mod par;
pub mod pipeline;
pub mod planner;
pub mod plpp;
pub mod report;
pub mod scenario;
pub mod so3;
pub mod ssv;
pub mod trajectory;

pub use error::{Error, Result};
