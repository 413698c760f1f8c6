use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Rotation3, Vector3};

use super::config::{ScenarioConfig, TrajectoryKind};
use crate::geom::Pose;

fn yaw(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), angle)
}

/// Keyframe poses `T_cw`, re-anchored so the first is the identity.
pub fn generate_trajectory(config: &ScenarioConfig) -> Vec<Pose> {
    let t = &config.trajectory;
    let n = t.n_keyframes;
    let amp = t.yaw_amplitude_deg.to_radians();
    let phase = |i: usize| 2.0 * PI * i as f64 / (n - 1).max(1) as f64;
    let raw: Vec<Pose> = match t.kind {
        TrajectoryKind::Corridor => {
            // forward along +z; the heading wobbles so the centers are not collinear
            let mut center = Vector3::zeros();
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                out.push(Pose::from_camera_in_world(yaw(amp * phase(i).sin()), center));
                let s = phase(i);
                let heading = Vector3::new(0.25 * s.sin(), 0.08 * (1.5 * s).sin(), 1.0).normalize();
                center += heading * t.spacing;
            }
            out
        }
        TrajectoryKind::Orbit => {
            let r = t.radius;
            let target = Vector3::new(0.0, 0.0, r);
            (0..n)
                .map(|i| {
                    let theta = i as f64 * t.spacing / r;
                    let view = Vector3::new(theta.sin(), 0.0, theta.cos());
                    Pose::from_camera_in_world(yaw(theta), target - view * r)
                })
                .collect()
        }
        TrajectoryKind::Figure8 => {
            // lemniscate of Gerono; speed is at most a·√2 per radian
            let step = 2.0 * PI / n as f64;
            let a = 0.9 * t.spacing / (step * SQRT_2);
            (0..n)
                .map(|i| {
                    let s = i as f64 * step;
                    let center = Vector3::new(a * s.sin(), 0.1 * a * (0.5 * s).sin(), a * s.sin() * s.cos());
                    Pose::from_camera_in_world(yaw(amp * s.sin()), center)
                })
                .collect()
        }
    };
    let anchor = raw[0].inverse();
    raw.iter().map(|p| p.compose(&anchor)).collect()
}
