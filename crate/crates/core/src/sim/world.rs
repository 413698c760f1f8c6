use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::geom::{PluckerLine, Pose};

/// Inclusive range of frames in which a landmark may be observed.
pub type FrameWindow = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub id: u64,
    pub position: Vector3<f64>,
    pub window: FrameWindow,
}

/// Finite 3D segment belonging to one direction family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldLine {
    pub id: u64,
    pub family: usize,
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
    pub plucker: PluckerLine,
    pub window: FrameWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub points: Vec<WorldPoint>,
    pub lines: Vec<WorldLine>,
    /// Ground-truth primitive directions, one per family.
    pub gp_directions: Vec<Vector3<f64>>,
}

pub(crate) const WORLD_STREAM: u64 = 1;

fn window(config: &ScenarioConfig, frame: usize) -> FrameWindow {
    let n = config.trajectory.n_keyframes;
    match config.visibility.partition_block {
        Some(b) => {
            let start = frame / b * b;
            (start, (start + 2 * b - 1).min(n - 1))
        }
        None => (0, n - 1),
    }
}

/// Back-projects a random pixel of a random keyframe to a random depth.
fn spawn(config: &ScenarioConfig, poses: &[Pose], rng: &mut ChaCha8Rng) -> (Vector3<f64>, usize) {
    let frame = rng.random_range(0..poses.len());
    let margin = 0.05;
    let px = Vector2::new(
        rng.random_range(margin..1.0 - margin) * config.image.width,
        rng.random_range(margin..1.0 - margin) * config.image.height,
    );
    let [d0, d1] = config.depth_range;
    let depth = rng.random_range(d0..d1);
    let p_c = config.intrinsics.unproject(&px) * depth;
    (poses[frame].inverse().transform_point(&p_c), frame)
}

/// Landmarks and family lines, spawned around the keyframes of `poses`.
pub fn generate_world_with_poses(config: &ScenarioConfig, poses: &[Pose]) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(WORLD_STREAM);
    let points = (0..config.n_points as u64)
        .map(|id| {
            let (position, frame) = spawn(config, poses, &mut rng);
            WorldPoint { id, position, window: window(config, frame) }
        })
        .collect();
    let mut lines = Vec::new();
    for (family, f) in config.direction_families.iter().enumerate() {
        let d = Vector3::from(f.direction);
        for _ in 0..f.count {
            let (center, frame) = spawn(config, poses, &mut rng);
            let [l0, l1] = config.line_length_range;
            let half = 0.5 * rng.random_range(l0..=l1);
            lines.push(WorldLine {
                id: lines.len() as u64,
                family,
                start: center - d * half,
                end: center + d * half,
                plucker: PluckerLine::from_point_direction(&center, &d),
                window: window(config, frame),
            });
        }
    }
    World { points, lines, gp_directions: config.family_directions() }
}

pub fn generate_world(config: &ScenarioConfig) -> World {
    generate_world_with_poses(config, &super::generate_trajectory(config))
}
