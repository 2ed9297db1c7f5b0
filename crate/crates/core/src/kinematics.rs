//! Seven-joint serial arm: forward kinematics, geometric Jacobian and a
//! damped-least-squares inverse kinematics solver.
//!
//! The chain is described by rows of (fixed link transform, revolute axis):
//! `T(q) = base · Π (link_i · Rot(axis_i, q_i)) · tool`.

use nalgebra::{Matrix6, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Pose, Rot3, Vec3};

pub const JOINT_COUNT: usize = 7;

pub type Jacobian = SMatrix<f64, 6, JOINT_COUNT>;
pub type Twist = SVector<f64, 6>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("target is {distance:.3} m from the arm base, beyond its {reach:.3} m reach")]
    Unreachable { distance: f64, reach: f64 },
    #[error("no convergence after {} iterations (position error {:.2e} m, rotation error {:.2e} rad)", best.iterations, best.pos_err, best.rot_err)]
    NoConvergence { best: IkSolution },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointVector(pub [f64; JOINT_COUNT]);

impl JointVector {
    pub fn zeros() -> Self {
        JointVector([0.0; JOINT_COUNT])
    }

    fn as_vector(&self) -> SVector<f64, JOINT_COUNT> {
        SVector::from(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    /// Transform from the previous joint frame to this joint's frame at q = 0.
    pub link: Pose,
    /// Rotation axis in this joint's frame.
    pub axis: Vec3,
    /// `[lo, hi]`, radians.
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    /// Mount of the first joint in the robot torso frame.
    pub base: Pose,
    pub joints: [Joint; JOINT_COUNT],
    /// Last joint frame to end-effector.
    pub tool: Pose,
}

impl ArmModel {
    /// Shoulder 3R (z, y, x), elbow 1R (y), wrist 3R (x, y, x) with upper
    /// arm, forearm and hand lengths of 0.30, 0.30 and 0.10 m. At q = 0 the
    /// arm points along the base x axis and the last axis passes through the
    /// end-effector point.
    pub fn anthropomorphic(base: Pose) -> Self {
        use std::f64::consts::PI;
        let joint = |offset: f64, axis: Vec3, lo: f64, hi: f64| Joint {
            link: Pose::from_translation(Vec3::new(offset, 0.0, 0.0)),
            axis,
            limits: [lo, hi],
        };
        ArmModel {
            base,
            joints: [
                joint(0.0, Vec3::z(), -PI, PI),
                joint(0.0, Vec3::y(), -2.0, 2.0),
                joint(0.0, Vec3::x(), -PI, PI),
                joint(0.30, Vec3::y(), -2.6, 2.6),
                joint(0.30, Vec3::x(), -PI, PI),
                joint(0.0, Vec3::y(), -1.8, 1.8),
                joint(0.0, Vec3::x(), -PI, PI),
            ],
            tool: Pose::from_translation(Vec3::new(0.10, 0.0, 0.0)),
        }
    }

    /// Default left and right arms mounted 0.2 m either side of the torso.
    pub fn default_for(side: crate::retargeting::Side) -> Self {
        let y = match side {
            crate::retargeting::Side::Left => 0.2,
            crate::retargeting::Side::Right => -0.2,
        };
        Self::anthropomorphic(Pose::from_translation(Vec3::new(0.0, y, 0.0)))
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidModel(format!("joint {i} axis is not unit length")));
            }
            if !(j.limits[0] < j.limits[1]) {
                return Err(KinematicsError::InvalidModel(format!("joint {i} limits are not ordered")));
            }
            if !j.link.position.iter().all(|v| v.is_finite()) {
                return Err(KinematicsError::InvalidModel(format!("joint {i} link offset is not finite")));
            }
            Rot3::from_matrix(*j.link.orientation.matrix())?;
        }
        Rot3::from_matrix(*self.base.orientation.matrix())?;
        Rot3::from_matrix(*self.tool.orientation.matrix())?;
        if !(self.reach() > 0.0) {
            return Err(KinematicsError::InvalidModel("arm has zero reach".into()));
        }
        Ok(())
    }

    /// Upper bound on the distance from the base to the end-effector: the
    /// sum of all link and tool offsets.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.link.position.norm()).sum::<f64>() + self.tool.position.norm()
    }

    pub fn clamp(&self, q: &mut JointVector) {
        for (v, j) in q.0.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits[0], j.limits[1]);
        }
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.0.iter()
            .zip(&self.joints)
            .all(|(v, j)| (j.limits[0]..=j.limits[1]).contains(v))
    }
}

/// End-effector pose in the torso frame.
pub fn forward_kinematics(model: &ArmModel, q: &JointVector) -> Pose {
    let mut t = model.base;
    for (joint, &angle) in model.joints.iter().zip(&q.0) {
        t = t.compose(&joint.link);
        t.orientation = t.orientation * Rot3::from_axis_angle(&joint.axis, angle);
    }
    let mut ee = t.compose(&model.tool);
    ee.orientation = ee.orientation.renormalized();
    ee
}

/// Geometric Jacobian in the torso frame; rows are (linear; angular).
pub fn jacobian(model: &ArmModel, q: &JointVector) -> Jacobian {
    let mut t = model.base;
    let mut origins = [Vec3::zeros(); JOINT_COUNT];
    let mut axes = [Vec3::zeros(); JOINT_COUNT];
    for (i, (joint, &angle)) in model.joints.iter().zip(&q.0).enumerate() {
        t = t.compose(&joint.link);
        origins[i] = t.position;
        axes[i] = t.orientation * joint.axis;
        t.orientation = t.orientation * Rot3::from_axis_angle(&joint.axis, angle);
    }
    let p_ee = t.transform_point(&model.tool.position);
    let mut jac = Jacobian::zeros();
    for i in 0..JOINT_COUNT {
        let lin = axes[i].cross(&(p_ee - origins[i]));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axes[i]);
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkParams {
    /// Damping λ.
    pub damping: f64,
    pub max_iters: usize,
    /// Position tolerance, m.
    pub pos_tol: f64,
    /// Orientation tolerance, rad.
    pub rot_tol: f64,
    /// Fraction of the damped step applied per iteration, in (0, 1].
    pub step_scale: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        IkParams {
            damping: 0.05,
            max_iters: 200,
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            step_scale: 0.5,
        }
    }
}

impl IkParams {
    fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: &str| Err(KinematicsError::InvalidParams(m.to_string()));
        if !(self.damping >= 0.0) {
            return bad("damping must be non-negative");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.pos_tol > 0.0 && self.rot_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return bad("step_scale must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkSolution {
    pub q: JointVector,
    pub iterations: usize,
    pub pos_err: f64,
    pub rot_err: f64,
}

/// Pose error as a 6-vector: position difference and the rotation vector
/// taking the current orientation onto the target, both in the torso frame.
pub fn pose_residual(current: &Pose, target: &Pose) -> Twist {
    let dp = target.position - current.position;
    let dr = (target.orientation * current.orientation.transpose()).log();
    Twist::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// One damped least-squares step `Jᵀ(JJᵀ + λ²I)⁻¹ e`, before step scaling.
///
/// Its norm never exceeds `‖e‖ / (2λ)` for λ > 0.
pub fn dls_step(jac: &Jacobian, residual: &Twist, damping: f64) -> SVector<f64, JOINT_COUNT> {
    let jjt: Matrix6<f64> = jac * jac.transpose() + Matrix6::identity() * (damping * damping);
    let y = match jjt.cholesky() {
        Some(c) => c.solve(residual),
        // λ = 0 at an exact singularity: fall back to the pseudo-inverse.
        None => jjt
            .pseudo_inverse(1e-12)
            .map(|p| p * residual)
            .unwrap_or_else(|_| Twist::zeros()),
    };
    jac.transpose() * y
}

pub fn solve_ik(
    model: &ArmModel,
    target: &Pose,
    q0: &JointVector,
    params: &IkParams,
) -> Result<IkSolution, KinematicsError> {
    params.validate()?;
    Rot3::from_matrix(*target.orientation.matrix())?;
    let distance = (target.position - model.base.position).norm();
    let reach = model.reach();
    if distance > reach {
        return Err(KinematicsError::Unreachable { distance, reach });
    }

    let mut q = *q0;
    model.clamp(&mut q);
    let errors = |q: &JointVector| {
        let pose = forward_kinematics(model, q);
        let e = pose_residual(&pose, target);
        let pos = e.fixed_rows::<3>(0).norm();
        let rot = pose.orientation.angle_to(&target.orientation);
        (e, pos, rot)
    };
    let converged = |pos: f64, rot: f64| pos <= params.pos_tol && rot <= params.rot_tol;

    let (mut e, mut pos, mut rot) = errors(&q);
    let mut best = IkSolution {
        q,
        iterations: 0,
        pos_err: pos,
        rot_err: rot,
    };
    for iter in 1..=params.max_iters {
        if converged(pos, rot) {
            return Ok(best);
        }
        let step = dls_step(&jacobian(model, &q), &e, params.damping) * params.step_scale;
        let next = q.as_vector() + step;
        q = JointVector(next.into());
        model.clamp(&mut q);
        (e, pos, rot) = errors(&q);
        // Combined metric with 0.1 m per radian.
        if pos + 0.1 * rot < best.pos_err + 0.1 * best.rot_err || converged(pos, rot) {
            best = IkSolution {
                q,
                iterations: iter,
                pos_err: pos,
                rot_err: rot,
            };
        }
    }
    if converged(best.pos_err, best.rot_err) {
        Ok(best)
    } else {
        Err(KinematicsError::NoConvergence { best })
    }
}
