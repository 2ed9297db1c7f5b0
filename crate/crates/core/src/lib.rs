//! Bilateral bimanual teleoperation with haptic glove feedback.
//!
//! The operator side retargets wrist poses and glove readings to a simulated
//! dual-arm, dual-hand robot; the robot side streams fingertip taxel arrays
//! back, which are rendered as per-finger glove torques. Both sides talk over
//! a fixed-layout binary protocol at independent rates (control 500 Hz,
//! haptic 62 Hz, scene 30 Hz).

pub mod geometry;

pub use geometry::{pose_between, reorthonormalize, rot_inverse, GeometryError, Pose, Rot3, Vec3};
pub mod experiments;
pub mod haptics;
pub mod kinematics;
pub mod protocol;
pub mod simworld;
pub mod retargeting;
pub mod sessions;
