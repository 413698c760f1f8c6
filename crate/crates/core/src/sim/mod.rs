//! Deterministic synthetic scenes, trajectories and measurements.

mod config;
mod render;
mod trajectory;
mod world;

pub use config::{
    orthogonal_families, FamilyConfig, ImageSize, NoiseConfig, ScenarioConfig, TrajectoryConfig, TrajectoryKind,
    VisibilityConfig,
};
pub use render::{
    project_world_segment, render_measurements, write_observations_jsonl, FrameObservations, FrameTruth,
    PointObservation, Rendered, SegmentTruth, ID_STRIDE,
};
pub use trajectory::generate_trajectory;
pub use world::{generate_world, generate_world_with_poses, FrameWindow, World, WorldLine, WorldPoint};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::Pose;

/// A generated scenario: ground truth plus rendered measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub world: World,
    /// Ground-truth `T_cw` per keyframe.
    pub poses: Vec<Pose>,
    pub frames: Vec<FrameObservations>,
    pub truth: Vec<FrameTruth>,
}

pub fn simulate(config: &ScenarioConfig) -> Result<Simulation> {
    config.validate()?;
    let poses = generate_trajectory(config);
    let world = generate_world_with_poses(config, &poses);
    let Rendered { frames, truth } = render_measurements(&world, &poses, config)?;
    Ok(Simulation { config: config.clone(), world, poses, frames, truth })
}
