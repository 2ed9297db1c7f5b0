//! Pose algebra shared by the retargeting, kinematics and simulation code.
//!
//! Rotations are kept as 3×3 matrices whose columns are the child frame's
//! axes expressed in the parent frame. All frames are right-handed.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Positions in meters, or unit-free directions.
pub type Vec3 = Vector3<f64>;

/// Orthonormality tolerance applied when a matrix is ingested as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Columns shorter than this are treated as collapsed.
const MIN_COLUMN_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not a rotation (orthonormality error {error:.3e}, det {det:.6})")]
    NotARotation { error: f64, det: f64 },
    #[error("matrix cannot be re-orthonormalized (degenerate column or non-positive determinant)")]
    Degenerate,
    #[error("non-finite component in geometric value")]
    NonFinite,
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rot3(Matrix3<f64>);

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Validates `m` against [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let error = orthonormality_error(&m);
        let det = m.determinant();
        if error > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotARotation { error, det });
        }
        Ok(Rot3(m))
    }

    /// Row-major construction, validated.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match Unit::try_new(*axis, MIN_COLUMN_NORM) {
            Some(axis) => Rot3(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()),
            None => Self::identity(),
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rot3(*q.to_rotation_matrix().matrix())
    }

    /// Rotation about x, then y, then z (extrinsic), i.e. `Rz·Ry·Rx`.
    pub fn from_euler_xyz(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), yaw)
            * Self::from_axis_angle(&Vec3::y(), pitch)
            * Self::from_axis_angle(&Vec3::x(), roll)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Child-frame axis `i` (0 = x, 1 = y, 2 = z) expressed in the parent frame.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    /// Transpose without the ingest check; valid because `self` is a rotation.
    pub fn transpose(&self) -> Rot3 {
        Rot3(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Angle of this rotation (axis-angle magnitude), in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let (s, c) = self.sin_cos();
        s.atan2(c)
    }

    /// Rotation vector (axis·angle) of this rotation.
    pub fn log(&self) -> Vec3 {
        let m = &self.0;
        let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let (s, c) = self.sin_cos();
        let angle = s.atan2(c);
        if angle < 1e-8 {
            // θ/sin θ → 1
            v * 0.5
        } else if angle < std::f64::consts::PI - 1e-6 {
            v * (0.5 * angle / s)
        } else {
            nalgebra::Rotation3::from_matrix_unchecked(*m).scaled_axis()
        }
    }

    /// (sin θ, cos θ) from the skew and trace parts; atan2 of these keeps
    /// full precision for small angles where `acos` of the trace does not.
    fn sin_cos(&self) -> (f64, f64) {
        let m = &self.0;
        let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        (0.5 * v.norm(), 0.5 * (m.trace() - 1.0))
    }

    /// Angle of `self⁻¹·other`.
    pub fn angle_to(&self, other: &Rot3) -> f64 {
        (self.transpose() * *other).angle()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    /// Repairs accumulated drift when it exceeds [`ROTATION_TOLERANCE`].
    pub fn renormalized(self) -> Rot3 {
        if self.orthonormality_error() > ROTATION_TOLERANCE {
            reorthonormalize(&self.0).unwrap_or(self)
        } else {
            self
        }
    }
}

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rot3 {
    type Error = GeometryError;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        Rot3::from_rows(rows)
    }
}

impl From<Rot3> for [[f64; 3]; 3] {
    fn from(r: Rot3) -> Self {
        r.rows()
    }
}

/// ‖MᵀM − I‖_F
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Inverse of a rotation, checking that the input really is one.
pub fn rot_inverse(r: &Rot3) -> Result<Rot3, GeometryError> {
    let checked = Rot3::from_matrix(r.0)?;
    Ok(checked.transpose())
}

/// Gram–Schmidt in column order x, y, z.
pub fn reorthonormalize(m: &Matrix3<f64>) -> Result<Rot3, GeometryError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let cols: [Vec3; 3] = [m.column(0).into(), m.column(1).into(), m.column(2).into()];
    if cols.iter().any(|c| c.norm() < MIN_COLUMN_NORM) || m.determinant() <= 0.0 {
        return Err(GeometryError::Degenerate);
    }
    let x = cols[0].normalize();
    let y = cols[1] - x * x.dot(&cols[1]);
    let yn = y.norm();
    if yn < MIN_COLUMN_NORM {
        return Err(GeometryError::Degenerate);
    }
    let y = y / yn;
    let z = cols[2] - x * x.dot(&cols[2]) - y * y.dot(&cols[2]);
    let zn = z.norm();
    if zn < MIN_COLUMN_NORM {
        return Err(GeometryError::Degenerate);
    }
    let z = z / zn;
    Ok(Rot3(Matrix3::from_columns(&[x, y, z])))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rot3,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rot3) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn from_translation(position: Vec3) -> Self {
        Pose::new(position, Rot3::identity())
    }

    /// `self ∘ other`: `other` expressed in `self`'s parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.orientation.transpose();
        Pose {
            position: -(rt * self.position),
            orientation: rt,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * *p
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(self.orientation.matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        h
    }
}

/// `b` expressed in `a`'s frame.
pub fn pose_between(a: &Pose, b: &Pose) -> Pose {
    let a_inv = a.orientation.transpose();
    Pose {
        position: a_inv * (b.position - a.position),
        orientation: (a_inv * b.orientation).renormalized(),
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    /// Uniform random rotation from a normalized 4-D Gaussian sample.
    pub fn random_rotation<R: Rng>(rng: &mut R) -> Rot3 {
        let q = loop {
            let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 > 1e-6 && n2 <= 1.0 {
                break nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]);
            }
        };
        Rot3::from_quaternion(&UnitQuaternion::from_quaternion(q))
    }

    pub fn random_vec<R: Rng>(rng: &mut R, half_range: f64) -> Vec3 {
        Vec3::from_fn(|_, _| rng.random_range(-half_range..half_range))
    }

    pub fn random_pose<R: Rng>(rng: &mut R) -> Pose {
        Pose::new(random_vec(rng, 2.0), random_rotation(rng))
    }
}
