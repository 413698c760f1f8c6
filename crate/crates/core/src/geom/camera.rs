use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::Pose;
use crate::error::{Error, Result};

/// Depth below which a camera-frame point counts as behind the camera, meters.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config(format!(
                "intrinsics require fx > 0 and fy > 0 (got fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(1.0 / self.fx, 0.0, -self.cx / self.fx, 0.0, 1.0 / self.fy, -self.cy / self.fy, 0.0, 0.0, 1.0)
    }

    /// Maps a camera-frame line normal to its homogeneous image line (`det(K) K^-T`).
    pub fn line_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fy, 0.0, 0.0, 0.0, self.fx, 0.0, -self.fy * self.cx, -self.fx * self.cy, self.fx * self.fy)
    }

    /// Projects a camera-frame point.
    pub fn project(&self, p_c: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p_c.z <= MIN_DEPTH {
            return Err(Error::BehindCamera { depth: p_c.z });
        }
        Ok(Vector2::new(self.fx * p_c.x / p_c.z + self.cx, self.fy * p_c.y / p_c.z + self.cy))
    }

    /// Ray through a pixel at unit depth.
    pub fn unproject(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }
}

/// Projects a world point through `T_cw` and `K`.
pub fn project_point(p_w: &Vector3<f64>, t_cw: &Pose, k: &CameraIntrinsics) -> Result<Vector2<f64>> {
    k.project(&t_cw.transform_point(p_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector6;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let px = project_point(&Vector3::new(0.0, 0.0, 2.0), &Pose::identity(), &k()).unwrap();
        assert_eq!(px, Vector2::new(320.0, 240.0));
    }

    #[test]
    fn off_axis_point() {
        let px = project_point(&Vector3::new(1.0, 0.0, 2.0), &Pose::identity(), &k()).unwrap();
        assert_eq!(px, Vector2::new(570.0, 240.0));
    }

    #[test]
    fn behind_camera_is_rejected() {
        let err = project_point(&Vector3::new(0.0, 0.0, -1.0), &Pose::identity(), &k());
        assert!(matches!(err, Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn invalid_focal_length() {
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0).is_err());
        assert!(CameraIntrinsics::new(500.0, -1.0, 320.0, 240.0).is_err());
    }

    #[test]
    fn unproject_inverts_project() {
        let k = k();
        let pose = Pose::exp(&Vector6::new(0.1, -0.2, 0.3, 0.05, 0.02, -0.1));
        let p = Vector3::new(0.4, -0.3, 3.0);
        let px = project_point(&p, &pose, &k).unwrap();
        let ray = k.unproject(&px);
        let pc = pose.transform_point(&p);
        assert!((ray * pc.z - pc).norm() < 1e-12);
        assert!((k.matrix() * k.inverse_matrix() - Matrix3::identity()).abs().max() < 1e-15);
    }
}
