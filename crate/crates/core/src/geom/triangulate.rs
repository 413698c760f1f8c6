use nalgebra::{Matrix2, Vector2, Vector3};

use super::{CameraIntrinsics, PluckerLine, Pose};
use crate::error::{Error, Result};
use crate::vp::Segment2D;

/// Minimum angle between the two back-projected planes of a line, degrees.
pub const MIN_PLANE_ANGLE_DEG: f64 = 1.0;

/// Rays closer than this in angle (sine) are considered parallel.
const MIN_RAY_SINE: f64 = 1e-9;

fn world_ray(px: &Vector2<f64>, pose: &Pose, k: &CameraIntrinsics) -> Vector3<f64> {
    (pose.rotation_wc() * k.unproject(px)).normalize()
}

/// Midpoint triangulation of one point seen in two views.
pub fn triangulate_point(
    obs_a: &Vector2<f64>,
    obs_b: &Vector2<f64>,
    pose_a: &Pose,
    pose_b: &Pose,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>> {
    let ca = pose_a.center();
    let cb = pose_b.center();
    let ra = world_ray(obs_a, pose_a, k);
    let rb = world_ray(obs_b, pose_b, k);
    let baseline = cb - ca;
    if baseline.norm() < 1e-12 || ra.cross(&rb).norm() < MIN_RAY_SINE {
        return Err(Error::InsufficientParallax);
    }
    // minimize |ca + s ra - (cb + u rb)|
    let m = Matrix2::new(ra.dot(&ra), -ra.dot(&rb), ra.dot(&rb), -rb.dot(&rb));
    let rhs = Vector2::new(baseline.dot(&ra), baseline.dot(&rb));
    let sol = m.lu().solve(&rhs).ok_or(Error::InsufficientParallax)?;
    let pa = ca + ra * sol.x;
    let pb = cb + rb * sol.y;
    Ok(0.5 * (pa + pb))
}

/// World-frame plane `(normal, offset)` with `normal · x = offset`, spanned by a
/// camera center and an image segment.
fn backprojected_plane(seg: &Segment2D, pose: &Pose, k: &CameraIntrinsics) -> (Vector3<f64>, f64) {
    let rs = k.unproject(&seg.start);
    let re = k.unproject(&seg.end);
    let normal = (pose.rotation_wc() * rs.cross(&re)).normalize();
    (normal, normal.dot(&pose.center()))
}

/// Intersects the two back-projected planes of a segment pair.
pub fn triangulate_line(
    seg_a: &Segment2D,
    seg_b: &Segment2D,
    pose_a: &Pose,
    pose_b: &Pose,
    k: &CameraIntrinsics,
) -> Result<PluckerLine> {
    let (na, ha) = backprojected_plane(seg_a, pose_a, k);
    let (nb, hb) = backprojected_plane(seg_b, pose_b, k);
    let direction = na.cross(&nb);
    if direction.norm() < MIN_PLANE_ANGLE_DEG.to_radians().sin() {
        return Err(Error::InsufficientParallax);
    }
    // for x on both planes: x × (na × nb) = hb na - ha nb
    let normal = hb * na - ha * nb;
    Ok(PluckerLine::new(normal, direction))
}

/// Point on `line` closest to the viewing ray through `px`.
pub fn closest_point_on_line_to_ray(
    line: &PluckerLine,
    px: &Vector2<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Vector3<f64> {
    let c = pose.center();
    let r = world_ray(px, pose, k);
    let d = line.unit_direction();
    let p0 = line.closest_point_to_origin();
    // minimize |p0 + s d - (c + u r)|
    let b = d.dot(&r);
    let w = p0 - c;
    let denom = 1.0 - b * b;
    if denom.abs() < 1e-12 {
        return p0 + d * (-w.dot(&d));
    }
    let s = (b * w.dot(&r) - w.dot(&d)) / denom;
    p0 + d * s
}
