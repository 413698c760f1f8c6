//! Lie-group and projective geometry shared by the simulator and the optimizer.

mod camera;
pub mod plucker;
mod pose;
mod triangulate;

pub use camera::{project_point, CameraIntrinsics, MIN_DEPTH};
pub use plucker::{normalize_image_line, project_world_line, OrthonormalLine, PluckerLine};
pub use pose::{hat, so3_exp, so3_log, Pose};
pub use triangulate::{closest_point_on_line_to_ray, triangulate_line, triangulate_point, MIN_PLANE_ANGLE_DEG};

use nalgebra::Vector3;

/// Flips `v` so that its first largest-magnitude component is positive.
pub fn canonicalize_sign(v: &Vector3<f64>) -> Vector3<f64> {
    let mut idx = 0;
    for i in 1..3 {
        if v[i].abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        -v
    } else {
        *v
    }
}

/// Angle between two directions ignoring orientation, degrees.
pub fn unsigned_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let a = a.normalize();
    let b = b.normalize();
    a.cross(&b).norm().atan2(a.dot(&b).abs()).to_degrees()
}
