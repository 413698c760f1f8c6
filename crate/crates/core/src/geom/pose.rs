//! Rigid camera poses on SE(3).
//!
//! A [`Pose`] is the camera-from-world transform `T_cw`: a world point `p_w`
//! maps to the camera frame as `R_cw p_w + t_cw`. Tangent vectors are ordered
//! `[v, ω]` (translation first, rotation second) and act by left
//! multiplication, `T ⊞ ξ = exp(ξ) · T`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Skew-symmetric matrix such that `hat(a) * b = a × b`.
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Exponential map of so(3).
pub fn so3_exp(omega: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::new(*omega)
}

/// Logarithm of SO(3), returning the rotation vector.
pub fn so3_log(rotation: &Rotation3<f64>) -> Vector3<f64> {
    // atan2 form stays accurate near the identity, unlike acos of the trace
    let q = UnitQuaternion::from_rotation_matrix(rotation);
    let (mut v, mut w) = (q.imag(), q.w);
    if w < 0.0 {
        v = -v;
        w = -w;
    }
    let s = v.norm();
    if s < 1e-300 {
        return 2.0 * v;
    }
    v * (2.0 * s.atan2(w) / s)
}

/// Left Jacobian of SO(3), the `V` matrix of the SE(3) exponential.
fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = omega.norm_squared();
    let w = hat(omega);
    if theta_sq < 1e-10 {
        Matrix3::identity() + 0.5 * w + w * w / 6.0
    } else {
        let theta = theta_sq.sqrt();
        Matrix3::identity()
            + ((1.0 - theta.cos()) / theta_sq) * w
            + ((theta - theta.sin()) / (theta_sq * theta)) * w * w
    }
}

fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = omega.norm_squared();
    let w = hat(omega);
    if theta_sq < 1e-10 {
        Matrix3::identity() - 0.5 * w + w * w / 12.0
    } else {
        let theta = theta_sq.sqrt();
        let half = 0.5 * theta;
        let coeff = (1.0 - half * half.cos() / half.sin()) / theta_sq;
        Matrix3::identity() - 0.5 * w + coeff * w * w
    }
}

/// Camera-from-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    /// Builds `T_cw` from `R_cw` and `t_cw`.
    pub fn new(rotation_cw: Rotation3<f64>, translation_cw: Vector3<f64>) -> Self {
        Self { rotation: rotation_cw, translation: translation_cw }
    }

    /// Builds `T_cw` from the camera orientation `R_wc` and its center in the world.
    pub fn from_camera_in_world(rotation_wc: Rotation3<f64>, center_w: Vector3<f64>) -> Self {
        let rotation = rotation_wc.inverse();
        Self { rotation, translation: -(rotation * center_w) }
    }

    /// `R_cw`: rotates world vectors into the camera frame.
    pub fn rotation_cw(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    /// `R_wc`: rotates camera vectors into the world frame.
    pub fn rotation_wc(&self) -> Rotation3<f64> {
        self.rotation.inverse()
    }

    /// `t_cw`: the world origin expressed in the camera frame.
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose { rotation, translation: -(rotation * self.translation) }
    }

    /// SE(3) exponential of the twist `[v, ω]`.
    pub fn exp(twist: &Vector6<f64>) -> Pose {
        let v = twist.fixed_rows::<3>(0).into_owned();
        let omega = twist.fixed_rows::<3>(3).into_owned();
        Pose { rotation: so3_exp(&omega), translation: so3_left_jacobian(&omega) * v }
    }

    /// SE(3) logarithm, inverse of [`Pose::exp`] for rotation angles below π.
    pub fn log(&self) -> Vector6<f64> {
        let omega = so3_log(&self.rotation);
        let v = so3_left_jacobian_inv(&omega) * self.translation;
        Vector6::new(v.x, v.y, v.z, omega.x, omega.y, omega.z)
    }

    /// Left retraction `exp(ξ) · self`.
    pub fn retract(&self, twist: &Vector6<f64>) -> Pose {
        Pose::exp(twist).compose(self)
    }

    /// Rotation angle between the two orientations, radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        so3_log(&(self.rotation.inverse() * other.rotation)).norm()
    }

    /// Re-projects the rotation onto SO(3); used after long update chains.
    pub fn renormalized(&self) -> Pose {
        Pose {
            rotation: Rotation3::from_matrix_eps(self.rotation.matrix(), 1e-15, 16, self.rotation),
            translation: self.translation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, angle: f64) -> Pose {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            .normalize();
        let t = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let w = axis * angle;
        Pose::exp(&Vector6::new(t.x, t.y, t.z, w.x, w.y, w.z))
    }

    fn orthonormality_error(p: &Pose) -> f64 {
        let m = p.rotation_cw().matrix();
        (m.transpose() * m - Matrix3::identity()).abs().max() + (m.determinant() - 1.0).abs()
    }

    #[test]
    fn zero_twist_is_identity() {
        let p = Pose::exp(&Vector6::zeros());
        assert_eq!(p.rotation_cw().matrix(), &Matrix3::identity());
        assert_eq!(p.translation(), &Vector3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = Pose::exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((p.rotation_cw().matrix() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let axis =
                Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    .normalize()
                    * 0.3;
            let xi = Vector6::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                axis.x,
                axis.y,
                axis.z,
            );
            let back = Pose::exp(&xi).log();
            assert!((back - xi).abs().max() < 1e-9);
        }
    }

    #[test]
    fn exp_log_round_trip_large_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let angle = rng.random_range(0.0..3.0);
            let p = random_pose(&mut rng, angle);
            let q = Pose::exp(&p.log());
            assert!((q.rotation_cw().matrix() - p.rotation_cw().matrix()).abs().max() < 1e-9);
            assert!((q.translation() - p.translation()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = random_pose(&mut rng, 1.2);
            let id = p.compose(&p.inverse());
            assert!((id.rotation_cw().matrix() - Matrix3::identity()).abs().max() < 1e-9);
            assert!(id.translation().norm() < 1e-9);
            assert!(orthonormality_error(&p) < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let a = random_pose(&mut rng, 0.7);
            let b = random_pose(&mut rng, 1.1);
            let c = random_pose(&mut rng, 2.0);
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            assert!((l.rotation_cw().matrix() - r.rotation_cw().matrix()).abs().max() < 1e-12);
            assert!((l.translation() - r.translation()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn retraction_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = Pose::identity();
        for _ in 0..1000 {
            let xi = Vector6::from_fn(|_, _| rng.random_range(-0.1..0.1));
            p = p.retract(&xi);
        }
        assert!(orthonormality_error(&p) < 1e-9);
    }

    #[test]
    fn center_and_camera_in_world_agree() {
        let c = Vector3::new(1.0, -2.0, 0.5);
        let r = Rotation3::from_euler_angles(0.1, -0.3, 0.7);
        let p = Pose::from_camera_in_world(r, c);
        assert!((p.center() - c).norm() < 1e-12);
        assert!(p.transform_point(&c).norm() < 1e-12);
        assert!((p.rotation_wc().matrix() - r.matrix()).abs().max() < 1e-15);
    }
}
