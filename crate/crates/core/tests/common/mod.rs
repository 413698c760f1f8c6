//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use gpslam::geom::{CameraIntrinsics, OrthonormalLine, PluckerLine, Pose};
use gpslam::graph::{numeric_jacobian, Factor, LineFactor, PointFactor, StructFactor, Values, VdAlignFactor};
use gpslam::vp::Segment2D;
use nalgebra::{DMatrix, Matrix2, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn k() -> CameraIntrinsics {
    CameraIntrinsics::new(460.0, 455.0, 321.0, 239.5).unwrap()
}

pub fn rel_err(a: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    (a - n).amax() / n.amax().max(1e-12)
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize()
}

pub fn random_config(seed: u64) -> (Values, Vec<Factor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let twist = Vector6::from_fn(|i, _| if i < 3 { rng.random_range(-0.5..0.5) } else { rng.random_range(-0.4..0.4) });
    let pose = Pose::exp(&twist);
    let inv = pose.inverse();
    let pc = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..5.0));
    let a = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..5.0));
    let b = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..5.0));
    let line_w = PluckerLine::from_points(&inv.transform_point(&a), &inv.transform_point(&b));
    let seg = Segment2D::new(
        0,
        Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
        Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
    );
    let mut values = Values::default();
    values.poses.insert(0, pose);
    values.points.insert(0, inv.transform_point(&pc));
    values.lines.insert(0, OrthonormalLine::from_plucker(&line_w));
    values.gps.insert(0, random_unit(&mut rng));
    let cov = Matrix2::new(1.3, 0.2, 0.2, 0.9);
    let factors = vec![
        Factor::Point(PointFactor { pose: 0, point: 0, obs: Vector2::new(300.0, 200.0), covariance: cov, huber: None }),
        Factor::Line(LineFactor { pose: 0, line: 0, obs: seg.clone(), covariance: cov, huber: None }),
        Factor::VdAlign(VdAlignFactor { pose: 0, gp: 0, segment: seg, sigma: 0.02, huber: None }),
        Factor::Struct(StructFactor { line: 0, gp: 0, sigma: 0.01, huber: None }),
    ];
    (values, factors)
}

// the oracle differentiates the raw residual; analytic blocks are whitened
pub fn whiten(f: &Factor, j: &DMatrix<f64>) -> DMatrix<f64> {
    match f {
        Factor::Point(PointFactor { covariance, .. }) | Factor::Line(LineFactor { covariance, .. }) => {
            let l = gpslam::graph::sqrt_information(covariance).unwrap();
            DMatrix::from_column_slice(2, 2, l.as_slice()) * j
        }
        Factor::VdAlign(VdAlignFactor { sigma, .. }) | Factor::Struct(StructFactor { sigma, .. }) => j / *sigma,
    }
}

/// Largest relative error between whitened analytic and numeric Jacobian
/// blocks over `n` seeded random configurations of every factor type.
pub fn worst_jacobian_error(n: u64) -> f64 {
    let k = k();
    let mut worst: f64 = 0.0;
    for seed in 0..n {
        let (values, factors) = random_config(seed);
        for f in &factors {
            let lin = f.linearize(&values, &k).unwrap();
            let numeric = numeric_jacobian(f, &values, &k, 1e-6).unwrap();
            assert_eq!(lin.blocks.len(), numeric.len());
            for ((_, j_white), j_num) in lin.blocks.iter().zip(&numeric) {
                worst = worst.max(rel_err(j_white, &whiten(f, j_num)));
            }
        }
    }
    worst
}
