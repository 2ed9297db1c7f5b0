//! Operator wrist and glove readings to robot end-effector and hand targets.
//!
//! The operator's wrist pose at calibration defines a local reference frame.
//! Later samples are expressed relative to it and replayed on the robot
//! relative to the arm's pre-positioned home pose:
//!
//! ```text
//! p_local   = R_calib⁻¹ · (p_now − p_calib)
//! R_local   = R_calib⁻¹ · R_now
//! k_target  = Q_home · (scale · p_local) + k_home
//! Q_target  = Q_home · R_local
//! ```
//!
//! Hands are mapped isomorphically: normalized glove bend and thumb split are
//! passed through with saturation into `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rot_inverse, GeometryError, Pose, Rot3, Vec3};
use crate::haptics::FINGER_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RetargetError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("workspace scale must be positive, got {0}")]
    NonPositiveScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left = 0,
    Right = 1,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_u8(v: u8) -> Option<Side> {
        match v {
            0 => Some(Side::Left),
            1 => Some(Side::Right),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorCalibration {
    pub p_init: Vec3,
    pub r_gl: Rot3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WristSample {
    pub p_now: Vec3,
    pub r_gn: Rot3,
    pub t_us: u64,
}

impl WristSample {
    pub fn pose(&self) -> Pose {
        Pose::new(self.p_now, self.r_gn)
    }
}

/// Wrist displacement and orientation in the calibrated local frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativePose {
    pub p_l: Vec3,
    pub r_ln: Rot3,
}

impl RelativePose {
    pub fn identity() -> Self {
        RelativePose::default()
    }
}

/// Pre-positioned end-effector pose in the robot torso frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotHome {
    pub k_init: Vec3,
    pub q_gl: Rot3,
}

impl RobotHome {
    pub fn pose(&self) -> Pose {
        Pose::new(self.k_init, self.q_gl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorTarget {
    pub k_now: Vec3,
    pub q_gn: Rot3,
}

impl EndEffectorTarget {
    pub fn pose(&self) -> Pose {
        Pose::new(self.k_now, self.q_gn)
    }
}

/// Normalized finger bend (thumb..little) and thumb split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandPose {
    pub bend: [f64; FINGER_COUNT],
    pub thumb_split: f64,
}

impl HandPose {
    pub fn open() -> Self {
        HandPose::default()
    }

    pub fn uniform(bend: f64, thumb_split: f64) -> Self {
        map_hand([bend; FINGER_COUNT], thumb_split)
    }

    pub fn is_valid(&self) -> bool {
        self.bend
            .iter()
            .chain(std::iter::once(&self.thumb_split))
            .all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetargetConfig {
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub left_home: RobotHome,
    pub right_home: RobotHome,
}

fn default_scale() -> f64 {
    1.0
}

impl RetargetConfig {
    pub fn home(&self, side: Side) -> &RobotHome {
        match side {
            Side::Left => &self.left_home,
            Side::Right => &self.right_home,
        }
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(RetargetError::NonPositiveScale(self.scale));
        }
        Ok(())
    }
}

impl Default for RetargetConfig {
    /// Hands 0.4 m in front of the torso, 0.15 m either side of the midline,
    /// inside the reachable workspace of the default arms.
    fn default() -> Self {
        RetargetConfig {
            scale: 1.0,
            left_home: RobotHome {
                k_init: Vec3::new(0.40, 0.15, -0.10),
                q_gl: Rot3::identity(),
            },
            right_home: RobotHome {
                k_init: Vec3::new(0.40, -0.15, -0.10),
                q_gl: Rot3::identity(),
            },
        }
    }
}

/// The current wrist pose becomes the local reference frame.
pub fn calibrate(sample: &WristSample) -> OperatorCalibration {
    OperatorCalibration {
        p_init: sample.p_now,
        r_gl: sample.r_gn,
    }
}

pub fn relative_pose(
    calib: &OperatorCalibration,
    sample: &WristSample,
) -> Result<RelativePose, RetargetError> {
    let r_lg = rot_inverse(&calib.r_gl)?;
    Ok(RelativePose {
        p_l: r_lg * (sample.p_now - calib.p_init),
        // The columns of this product are the wrist axes in the local frame.
        r_ln: (r_lg * sample.r_gn).renormalized(),
    })
}

pub fn apply_to_robot(home: &RobotHome, rel: &RelativePose, cfg: &RetargetConfig) -> EndEffectorTarget {
    EndEffectorTarget {
        k_now: home.q_gl * (rel.p_l * cfg.scale) + home.k_init,
        q_gn: (home.q_gl * rel.r_ln).renormalized(),
    }
}

/// Operator-side inverse of [`apply_to_robot`] and [`relative_pose`]: the wrist
/// sample that commands the robot end-effector to `target`. Scripted operator
/// policies plan in robot coordinates and use this to synthesize tracker data.
pub fn wrist_for_target(
    calib: &OperatorCalibration,
    home: &RobotHome,
    target: &Pose,
    cfg: &RetargetConfig,
    t_us: u64,
) -> WristSample {
    let q_lg = home.q_gl.transpose();
    let p_l = q_lg * (target.position - home.k_init) / cfg.scale;
    let r_ln = q_lg * target.orientation;
    WristSample {
        p_now: calib.r_gl * p_l + calib.p_init,
        r_gn: (calib.r_gl * r_ln).renormalized(),
        t_us,
    }
}

/// Isomorphic glove-to-hand mapping with saturation. Non-finite readings map
/// to zero (open).
pub fn map_hand(glove_bend: [f64; FINGER_COUNT], glove_split: f64) -> HandPose {
    let sat = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    HandPose {
        bend: glove_bend.map(sat),
        thumb_split: sat(glove_split),
    }
}
