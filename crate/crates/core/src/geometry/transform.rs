use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, UnitQuaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Tolerance on `‖RᵀR − I‖_F` and `|det R − 1|` accepted by [`RigidTransform::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A proper rigid motion `p ↦ R·p + T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRecord", into = "PoseRecord")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Serialized form: row-major rotation rows and a translation triple.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for PoseRecord {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<PoseRecord> for RigidTransform {
    type Error = Error;

    fn try_from(p: PoseRecord) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| p.rotation[i][j]);
        RigidTransform::new(r, Vec3::from(p.translation))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let t = Self { rotation, translation };
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        let ortho = t.orthonormality_error();
        let det = rotation.determinant();
        if !(ortho < ROTATION_TOLERANCE) || (det - 1.0).abs() >= ROTATION_TOLERANCE {
            return Err(Error::invalid(format!(
                "rotation is not proper (‖RᵀR−I‖={ortho:.3e}, det={det})"
            )));
        }
        Ok(t)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = *Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).matrix();
        Self { rotation, translation }
    }

    /// Uniformly distributed rotation with a translation drawn from the cube
    /// `[-translation_scale, translation_scale]³`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, translation_scale: f64) -> Self {
        // Shoemake's method: uniform unit quaternion from three uniforms.
        let u1: f64 = rng.random();
        let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let q = nalgebra::Quaternion::new(a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
        let rotation = *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix();
        let translation = Vec3::from_fn(|_, _| (rng.random::<f64>() * 2.0 - 1.0) * translation_scale);
        Self { rotation, translation }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Rotation angle (radians) of `self⁻¹ ∘ other`.
    pub fn angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix4();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self> {
        let bottom = &values[12..16];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid(format!("homogeneous matrix has bottom row {bottom:?}")));
        }
        let rotation = Matrix3::from_fn(|r, c| values[r * 4 + c]);
        let translation = Vec3::new(values[3], values[7], values[11]);
        Self::new(rotation, translation)
    }

    /// Row-major 3×3 rotation.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.rotation[(r, c)];
            }
        }
        out
    }

    pub fn from_rotation_row_major(rotation: &[f64; 9], translation: Vec3) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rotation[r * 3 + c]), translation)
    }
}

/// Applies `t` to every point.
pub fn transform_points(t: &RigidTransform, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| t.apply(p)).collect()
}
