//! Plücker lines and their minimal orthonormal parameterization.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::pose::{hat, so3_exp};
use super::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};

/// Image lines whose `(a, b)` part falls below this norm are treated as lines at infinity.
pub const DEGENERATE_IMAGE_LINE: f64 = 1e-12;

/// 3D line as `(n, d)`: `n = p × d` for any point `p` on the line.
///
/// Storage is unnormalized; compare lines through [`PluckerLine::normalized`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluckerLine {
    pub normal: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl PluckerLine {
    pub fn new(normal: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self { normal, direction }
    }

    /// Line through two distinct points, directed from `a` to `b`.
    pub fn from_points(a: &Vector3<f64>, b: &Vector3<f64>) -> Self {
        let direction = b - a;
        Self { normal: a.cross(&direction), direction }
    }

    pub fn from_point_direction(p: &Vector3<f64>, direction: &Vector3<f64>) -> Self {
        Self { normal: p.cross(direction), direction: *direction }
    }

    /// `|n·d|` relative to `|n||d|`; zero for a valid line.
    pub fn constraint_violation(&self) -> f64 {
        let scale = self.normal.norm() * self.direction.norm();
        if scale == 0.0 {
            0.0
        } else {
            self.normal.dot(&self.direction).abs() / scale
        }
    }

    /// Scaled copy with a unit direction.
    pub fn normalized(&self) -> Self {
        let s = self.direction.norm();
        Self { normal: self.normal / s, direction: self.direction / s }
    }

    pub fn unit_direction(&self) -> Vector3<f64> {
        self.direction.normalize()
    }

    pub fn flipped(&self) -> Self {
        Self { normal: -self.normal, direction: -self.direction }
    }

    /// Closest point on the line to the origin.
    pub fn closest_point_to_origin(&self) -> Vector3<f64> {
        self.direction.cross(&self.normal) / self.direction.norm_squared()
    }

    /// Euclidean distance from `p` to the line.
    pub fn distance_to_point(&self, p: &Vector3<f64>) -> f64 {
        (p.cross(&self.direction) - self.normal).norm() / self.direction.norm()
    }

    /// Whether both lines describe the same set of points, ignoring scale and orientation.
    pub fn same_line(&self, other: &PluckerLine, tol: f64) -> bool {
        let a = self.normalized();
        let b = other.normalized();
        let same = (a.normal - b.normal).norm() + (a.direction - b.direction).norm();
        let opposite = (a.normal + b.normal).norm() + (a.direction + b.direction).norm();
        same.min(opposite) <= tol
    }

    /// Moves the line from world to camera frame: `n_c = R n + t × R d`, `d_c = R d`.
    pub fn transform(&self, t_cw: &Pose) -> PluckerLine {
        let d = t_cw.rotation_cw() * self.direction;
        let n = t_cw.rotation_cw() * self.normal + t_cw.translation().cross(&d);
        PluckerLine { normal: n, direction: d }
    }

    /// Homogeneous image line of a camera-frame line, `l = K_L n_c`.
    pub fn project(&self, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
        let unit = self.normalized();
        let l = k.line_matrix() * unit.normal;
        if Vector2::new(l.x, l.y).norm() < DEGENERATE_IMAGE_LINE {
            return Err(Error::DegenerateLine);
        }
        Ok(l)
    }
}

/// Image line scaled so that `(a, b)` has unit norm.
pub fn normalize_image_line(l: &Vector3<f64>) -> Vector3<f64> {
    l / Vector2::new(l.x, l.y).norm()
}

/// Transforms a world line into the camera and projects it.
pub fn project_world_line(l_w: &PluckerLine, t_cw: &Pose, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    l_w.transform(t_cw).project(k)
}

/// Four-parameter line representation `(U, W) ∈ SO(3) × SO(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalLine {
    pub u: Matrix3<f64>,
    pub w: Matrix2<f64>,
}

impl OrthonormalLine {
    pub fn from_plucker(line: &PluckerLine) -> Self {
        let n_norm = line.normal.norm();
        let d_norm = line.direction.norm();
        let u2 = line.direction / d_norm;
        let u1 = if n_norm > 1e-15 * d_norm {
            // strip any residual component along d so U is exactly orthonormal
            let n = line.normal - u2 * u2.dot(&line.normal);
            n.normalize()
        } else {
            any_perpendicular(&u2)
        };
        let u3 = u1.cross(&u2);
        let scale = (n_norm * n_norm + d_norm * d_norm).sqrt();
        let (w1, w2) = (n_norm / scale, d_norm / scale);
        Self { u: Matrix3::from_columns(&[u1, u2, u3]), w: Matrix2::new(w1, -w2, w2, w1) }
    }

    pub fn to_plucker(&self) -> PluckerLine {
        PluckerLine {
            normal: self.w[(0, 0)] * self.u.column(0).into_owned(),
            direction: self.w[(1, 0)] * self.u.column(1).into_owned(),
        }
    }

    /// Left update `U ← exp(θ) U`, `W ← R(φ) W` with `delta = [θ, φ]`.
    pub fn update(&self, delta: &Vector4<f64>) -> Self {
        let theta = Vector3::new(delta[0], delta[1], delta[2]);
        let rot = so3_exp(&theta);
        let (s, c) = delta[3].sin_cos();
        let r2 = Matrix2::new(c, -s, s, c);
        Self { u: rot.matrix() * self.u, w: r2 * self.w }
    }

    pub fn unit_direction(&self) -> Vector3<f64> {
        self.u.column(1).into_owned()
    }

    /// Same line with its direction reversed.
    pub fn flipped(&self) -> Self {
        let mut u = self.u;
        u.set_column(0, &(-self.u.column(0)));
        u.set_column(1, &(-self.u.column(1)));
        Self { u, w: self.w }
    }

    /// Derivatives of `(n, d)` with respect to `[θ, φ]` at the current state.
    pub fn plucker_jacobian(&self) -> (nalgebra::Matrix3x4<f64>, nalgebra::Matrix3x4<f64>) {
        let u1 = self.u.column(0).into_owned();
        let u2 = self.u.column(1).into_owned();
        let (w1, w2) = (self.w[(0, 0)], self.w[(1, 0)]);
        let mut dn = nalgebra::Matrix3x4::zeros();
        let mut dd = nalgebra::Matrix3x4::zeros();
        dn.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-w1 * hat(&u1)));
        dn.set_column(3, &(-w2 * u1));
        dd.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-w2 * hat(&u2)));
        dd.set_column(3, &(w1 * u2));
        (dn, dd)
    }
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let abs = v.abs();
    let axis = if abs.x <= abs.y && abs.x <= abs.z {
        Vector3::x()
    } else if abs.y <= abs.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&axis).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
    }

    fn random_line(rng: &mut ChaCha8Rng) -> PluckerLine {
        let p = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let d = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let s = rng.random_range(0.1..10.0);
        let l = PluckerLine::from_point_direction(&p, &d);
        PluckerLine::new(l.normal * s, l.direction * s)
    }

    #[test]
    fn identity_transform_is_noop() {
        let l = PluckerLine::from_points(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(1.0, 1.0, 0.0));
        assert_eq!(l.transform(&Pose::identity()), l);
    }

    #[test]
    fn translated_line_keeps_membership() {
        let l = PluckerLine::from_point_direction(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(0.0, 1.0, 0.0));
        let pose = Pose::new(Rotation3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let lc = l.transform(&pose);
        for s in [-2.0, 0.0, 0.7, 5.0] {
            let p = Vector3::new(1.0, s, 0.0);
            assert!(lc.distance_to_point(&pose.transform_point(&p)) < 1e-9);
        }
        assert!(lc.constraint_violation() < 1e-9);
    }

    #[test]
    fn rotation_maps_direction() {
        let l = PluckerLine::from_point_direction(&Vector3::new(0.0, 0.0, 2.0), &Vector3::new(1.0, 0.0, 0.0));
        let pose = Pose::exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let lc = l.transform(&pose);
        assert!((lc.direction - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn projection_of_horizontal_line() {
        let l = PluckerLine::from_point_direction(&Vector3::new(0.0, 0.0, 1.0), &Vector3::new(1.0, 0.0, 0.0));
        let img = normalize_image_line(&l.project(&k()).unwrap());
        let expected = Vector3::new(0.0, 1.0, -240.0);
        assert!((img - expected).norm() < 1e-12 || (img + expected).norm() < 1e-12);
    }

    #[test]
    fn optical_axis_line_is_degenerate() {
        let l = PluckerLine::from_point_direction(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0));
        assert!(matches!(l.project(&k()), Err(Error::DegenerateLine)));
    }

    #[test]
    fn projection_is_scale_free() {
        let l = PluckerLine::from_point_direction(&Vector3::new(0.3, -0.2, 2.0), &Vector3::new(1.0, 0.5, 0.2));
        let l2 = PluckerLine::new(l.normal * 2.0, l.direction * 2.0);
        let a = normalize_image_line(&l.project(&k()).unwrap());
        let b = normalize_image_line(&l2.project(&k()).unwrap());
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn transform_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let l = random_line(&mut rng);
            let t1 = Pose::exp(&Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let t2 = Pose::exp(&Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let direct = l.transform(&t2.compose(&t1));
            let chained = l.transform(&t1).transform(&t2);
            assert!(direct.same_line(&chained, 1e-9));
        }
    }

    #[test]
    fn points_on_line_project_onto_image_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let k = k();
        let mut checked = 0;
        while checked < 100 {
            let l = random_line(&mut rng);
            let pose = Pose::exp(&Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5)));
            let lc = l.transform(&pose);
            let Ok(img) = lc.project(&k) else { continue };
            let img = normalize_image_line(&img);
            let base = l.closest_point_to_origin();
            for s in [-1.0, 0.5, 2.0] {
                let p = base + l.unit_direction() * s;
                if let Ok(px) = super::super::project_point(&p, &pose, &k) {
                    assert!(img.dot(&Vector3::new(px.x, px.y, 1.0)).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn orthonormal_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let l = random_line(&mut rng);
            let o = OrthonormalLine::from_plucker(&l);
            assert!((o.u.transpose() * o.u - Matrix3::identity()).abs().max() < 1e-12);
            assert!((o.w.transpose() * o.w - Matrix2::identity()).abs().max() < 1e-12);
            assert!(o.to_plucker().same_line(&l, 1e-9));
        }
    }

    #[test]
    fn line_through_origin_round_trips() {
        let l = PluckerLine::from_point_direction(&Vector3::zeros(), &Vector3::new(0.0, 1.0, 1.0));
        let o = OrthonormalLine::from_plucker(&l);
        assert!(o.to_plucker().same_line(&l, 1e-12));
    }

    #[test]
    fn orthonormal_update_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let l = random_line(&mut rng);
        let o = OrthonormalLine::from_plucker(&l);
        assert!(o.update(&Vector4::zeros()).to_plucker().same_line(&l, 1e-15));

        let small = o.update(&Vector4::repeat(1e-8)).to_plucker().normalized();
        let base = l.normalized();
        let change = (small.normal - base.normal).norm() + (small.direction - base.direction).norm();
        assert!(change > 0.0 && change < 1e-6);

        let mut cur = o;
        for _ in 0..100 {
            cur = cur.update(&Vector4::from_fn(|_, _| rng.random_range(-0.3..0.3)));
        }
        assert!((cur.u.transpose() * cur.u - Matrix3::identity()).abs().max() < 1e-12);
        assert!(cur.to_plucker().constraint_violation() < 1e-9);
    }
}
