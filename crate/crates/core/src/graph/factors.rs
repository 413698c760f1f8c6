//! Residual kernels and their analytic Jacobians.
//!
//! Pose Jacobians are taken with respect to the left twist `[v, ω]`, line
//! Jacobians with respect to the orthonormal update `[θ, φ]` and primitive
//! Jacobians with respect to the tangent coordinates `(w1, w2)`.

use nalgebra::{
    Matrix1x3, Matrix2, Matrix2x3, Matrix2x4, Matrix2x6, Matrix3, Matrix3x2, RowVector2, RowVector3, RowVector4,
    RowVector6, Vector2, Vector3,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{hat, CameraIntrinsics, OrthonormalLine, PluckerLine, Pose};
use crate::vp::{segment_line, Segment2D};

/// Orthonormal completion of a unit direction used for its local chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentBasis {
    pub b1: Vector3<f64>,
    pub b2: Vector3<f64>,
}

impl TangentBasis {
    pub fn matrix(&self) -> Matrix3x2<f64> {
        Matrix3x2::from_columns(&[self.b1, self.b2])
    }
}

/// `b1 = normalize(a × e_k)` with `e_k` the axis of the smallest |component| of
/// `a`, and `b2 = a × b1`, so `(a, b1, b2)` is right-handed.
pub fn tangent_basis(anchor: &Vector3<f64>) -> TangentBasis {
    let abs = anchor.abs();
    let axis = if abs.x <= abs.y && abs.x <= abs.z {
        Vector3::x()
    } else if abs.y <= abs.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let b1 = anchor.cross(&axis).normalize();
    let b2 = anchor.cross(&b1);
    TangentBasis { b1, b2 }
}

/// `normalize(anchor + w1 b1 + w2 b2)`.
pub fn gp_retract(anchor: &Vector3<f64>, w1: f64, w2: f64) -> Vector3<f64> {
    let b = tangent_basis(anchor);
    (anchor + w1 * b.b1 + w2 * b.b2).normalize()
}

/// Projection of `p_w` minus the observed pixel.
pub fn point_residual(
    p_w: &Vector3<f64>,
    t_cw: &Pose,
    k: &CameraIntrinsics,
    obs: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    let p_c = t_cw.transform_point(p_w);
    Ok(k.project(&p_c)? - obs)
}

/// Residual with Jacobians `(∂e/∂pose, ∂e/∂point)`.
pub fn point_residual_jacobians(
    p_w: &Vector3<f64>,
    t_cw: &Pose,
    k: &CameraIntrinsics,
    obs: &Vector2<f64>,
) -> Result<(Vector2<f64>, Matrix2x6<f64>, Matrix2x3<f64>)> {
    let p_c = t_cw.transform_point(p_w);
    let e = k.project(&p_c)? - obs;
    let iz = 1.0 / p_c.z;
    let de_dpc = Matrix2x3::new(k.fx * iz, 0.0, -k.fx * p_c.x * iz * iz, 0.0, k.fy * iz, -k.fy * p_c.y * iz * iz);
    let mut j_pose = Matrix2x6::zeros();
    j_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&de_dpc);
    j_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&(de_dpc * -hat(&p_c)));
    let j_point = de_dpc * t_cw.rotation_cw().matrix();
    Ok((e, j_pose, j_point))
}

fn endpoint_distances(l: &Vector3<f64>, obs: &Segment2D) -> Result<(Vector2<f64>, f64)> {
    let s = Vector2::new(l.x, l.y).norm();
    if s < crate::geom::plucker::DEGENERATE_IMAGE_LINE {
        return Err(Error::DegenerateLine);
    }
    let xs = Vector3::new(obs.start.x, obs.start.y, 1.0);
    let xe = Vector3::new(obs.end.x, obs.end.y, 1.0);
    Ok((Vector2::new(l.dot(&xs), l.dot(&xe)) / s, s))
}

/// Signed distances of the observed endpoints to the projected infinite line.
pub fn line_residual(l_w: &PluckerLine, t_cw: &Pose, k: &CameraIntrinsics, obs: &Segment2D) -> Result<Vector2<f64>> {
    let l = l_w.transform(t_cw).project(k)?;
    Ok(endpoint_distances(&l, obs)?.0)
}

/// Residual with Jacobians `(∂e/∂pose, ∂e/∂line)`.
pub fn line_residual_jacobians(
    line: &OrthonormalLine,
    t_cw: &Pose,
    k: &CameraIntrinsics,
    obs: &Segment2D,
) -> Result<(Vector2<f64>, Matrix2x6<f64>, Matrix2x4<f64>)> {
    let l_w = line.to_plucker();
    let l_c = l_w.transform(t_cw);
    let kl = k.line_matrix();
    let l = kl * l_c.normal;
    let (e, s) = endpoint_distances(&l, obs)?;

    let ab = Vector3::new(l.x, l.y, 0.0);
    let mut de_dl = Matrix2x3::zeros();
    for (row, p) in [obs.start, obs.end].iter().enumerate() {
        let x = Vector3::new(p.x, p.y, 1.0);
        let g = x / s - ab * (l.dot(&x) / (s * s * s));
        de_dl.set_row(row, &g.transpose());
    }
    let de_dn = de_dl * kl;

    let mut j_pose = Matrix2x6::zeros();
    j_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&(de_dn * -hat(&l_c.direction)));
    j_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&(de_dn * -hat(&l_c.normal)));

    let r: &Matrix3<f64> = t_cw.rotation_cw().matrix();
    let (dn_w, dd_w) = line.plucker_jacobian();
    let dn_c = r * dn_w + hat(t_cw.translation()) * r * dd_w;
    let j_line = de_dn * dn_c;
    Ok((e, j_pose, j_line))
}

/// Incidence of the primitive's image vanishing point with the segment's line,
/// `l̂ · ṽ / |ṽ|` with `ṽ = K R_cw g`.
pub fn vd_align_residual(gp_dir: &Vector3<f64>, t_cw: &Pose, k: &CameraIntrinsics, seg: &Segment2D) -> f64 {
    let v = k.matrix() * (t_cw.rotation_cw() * gp_dir);
    segment_line(seg).dot(&v) / v.norm()
}

/// Residual with Jacobians `(∂e/∂pose, ∂e/∂(w1, w2))`.
pub fn vd_align_residual_jacobians(
    gp_dir: &Vector3<f64>,
    t_cw: &Pose,
    k: &CameraIntrinsics,
    seg: &Segment2D,
) -> (f64, RowVector6<f64>, RowVector2<f64>) {
    let km = k.matrix();
    let r = t_cw.rotation_cw().matrix();
    let v_cam = r * gp_dir;
    let v = km * v_cam;
    let vn = v.norm();
    let vh = v / vn;
    let l = segment_line(seg);
    let e = l.dot(&vh);
    let de_dv: RowVector3<f64> = ((l - vh * l.dot(&vh)) / vn).transpose();
    let de_dvcam = de_dv * km;

    let mut j_pose = RowVector6::zeros();
    j_pose.fixed_view_mut::<1, 3>(0, 3).copy_from(&(de_dvcam * -hat(&v_cam)));
    let j_gp = de_dvcam * r * tangent_basis(gp_dir).matrix();
    (e, j_pose, j_gp)
}

/// `|d · g − 1|` for unit line direction `d` and primitive direction `g`.
pub fn struct_residual(line_dir_w: &Vector3<f64>, gp_dir: &Vector3<f64>) -> f64 {
    (line_dir_w.dot(gp_dir) - 1.0).abs()
}

/// Residual `1 − u2 · g` with Jacobians `(∂e/∂line, ∂e/∂(w1, w2))`.
pub fn struct_residual_jacobians(
    line: &OrthonormalLine,
    gp_dir: &Vector3<f64>,
) -> (f64, RowVector4<f64>, RowVector2<f64>) {
    let u2 = line.unit_direction();
    let e = 1.0 - u2.dot(gp_dir);
    let mut j_line = RowVector4::zeros();
    let d_theta: Matrix1x3<f64> = -u2.cross(gp_dir).transpose();
    j_line.fixed_view_mut::<1, 3>(0, 0).copy_from(&d_theta);
    let j_gp = -(u2.transpose() * tangent_basis(gp_dir).matrix());
    (e, j_line, j_gp)
}

/// Upper-triangular `L` with `Lᵀ L = Σ⁻¹`, for whitening 2-D residuals.
pub fn sqrt_information(cov: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let info = cov.try_inverse().ok_or_else(|| Error::Config("covariance is singular".into()))?;
    let chol =
        nalgebra::Cholesky::new(info).ok_or_else(|| Error::Config("covariance is not positive definite".into()))?;
    Ok(chol.l().transpose())
}
