//! Hamilton, scalar-first unit quaternions.
//!
//! A quaternion `q_w_x` describes the orientation of frame `x` in the world
//! frame. [`Quaternion::world_to_body`] returns `C(q)`, the matrix that maps
//! world-frame coordinates into frame `x`; its transpose maps body
//! coordinates back into the world. Orientation errors are small rotations
//! left-multiplied in the world frame: `R_true = Exp(dtheta) * R_est`, with
//! `R = C(q)^T`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::math::so3_exp;

/// Departure from unit norm beyond which a conversion is flagged.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Result of [`quat_to_rotation`].
#[derive(Clone, Copy, Debug)]
pub struct RotationConversion {
    /// `C(q)`: world to body.
    pub world_to_body: Matrix3<f64>,
    /// True when the input was off unit norm by more than [`NORM_TOLERANCE`]
    /// and had to be renormalized.
    pub renormalized: bool,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Scales to unit norm and fixes the sign so that `w >= 0`.
    pub fn normalize(&mut self) {
        let mut n = self.norm();
        if self.w < 0.0 {
            n = -n;
        }
        self.w /= n;
        self.x /= n;
        self.y /= n;
        self.z /= n;
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Quaternion {
        let (a, b) = (self, rhs);
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Quaternion of the active rotation `Exp(phi)`.
    pub fn from_rotation_vector(phi: &Vector3<f64>) -> Quaternion {
        let angle = phi.norm();
        if angle < 1e-12 {
            return Quaternion::new(1.0, 0.5 * phi.x, 0.5 * phi.y, 0.5 * phi.z).normalized();
        }
        let axis = phi / angle;
        let s = (0.5 * angle).sin();
        Quaternion::new((0.5 * angle).cos(), s * axis.x, s * axis.y, s * axis.z).normalized()
    }

    /// Builds the orientation whose body-to-world matrix is `r`.
    pub fn from_body_to_world(r: &Matrix3<f64>) -> Quaternion {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(r));
        Quaternion::new(uq.w, uq.i, uq.j, uq.k).normalized()
    }

    /// Active rotation matrix of the quaternion, i.e. body to world.
    pub fn body_to_world(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
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

    /// `C(q)`: maps world coordinates into the body frame.
    pub fn world_to_body(&self) -> Matrix3<f64> {
        self.body_to_world().transpose()
    }

    /// Applies a world-frame error rotation: `R <- Exp(dtheta) R`.
    pub fn perturbed_world(&self, dtheta: &Vector3<f64>) -> Quaternion {
        Quaternion::from_rotation_vector(dtheta)
            .mul(self)
            .normalized()
    }

    /// Applies a body-frame increment: `R <- R Exp(phi)`.
    pub fn integrated_body(&self, phi: &Vector3<f64>) -> Quaternion {
        self.mul(&Quaternion::from_rotation_vector(phi))
            .normalized()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// World-frame rotation vector taking `other` to `self`:
    /// `R_self = Exp(v) R_other`.
    pub fn world_difference(&self, other: &Quaternion) -> Vector3<f64> {
        crate::math::so3_log(&(self.body_to_world() * other.body_to_world().transpose()))
    }
}

/// Converts a quaternion into `C(q)`. Off-norm inputs are renormalized and
/// the conversion is flagged.
pub fn quat_to_rotation(q: &Quaternion) -> RotationConversion {
    let renormalized = (q.norm() - 1.0).abs() > NORM_TOLERANCE;
    let unit = q.normalized();
    RotationConversion {
        world_to_body: unit.world_to_body(),
        renormalized,
    }
}

/// Rotation matrix of `Exp(phi)` re-exported for callers that only deal in
/// matrices.
pub fn rotation_from_vector(phi: &Vector3<f64>) -> Matrix3<f64> {
    so3_exp(phi)
}
