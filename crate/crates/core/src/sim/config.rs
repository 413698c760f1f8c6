use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::CameraIntrinsics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Corridor,
    Orbit,
    Figure8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    #[serde(rename = "type")]
    pub kind: TrajectoryKind,
    pub n_keyframes: usize,
    /// Distance between consecutive keyframes, meters (an upper bound for
    /// orbit and figure-eight paths).
    pub spacing: f64,
    /// Peak yaw oscillation, degrees.
    pub yaw_amplitude_deg: f64,
    /// Orbit radius, meters.
    pub radius: f64,
    /// Seconds between keyframes in exported trajectories.
    pub dt: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Corridor,
            n_keyframes: 20,
            spacing: 0.25,
            yaw_amplitude_deg: 8.0,
            radius: 3.0,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub direction: [f64; 3],
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Point observation σ, pixels.
    pub point_px: f64,
    /// Segment endpoint σ, pixels.
    pub line_px: f64,
    /// Extra endpoint σ of flow-predicted segments, pixels.
    pub flow_px: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { point_px: 1.0, line_px: 1.0, flow_px: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilityConfig {
    pub max_range: f64,
    /// When set, frames are grouped into consecutive blocks of this many
    /// frames and each landmark is visible only in the block of the frame it
    /// was spawned from and the next one. Frames two or more blocks apart then
    /// share no landmark.
    pub partition_block: Option<usize>,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self { max_range: 12.0, partition_block: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

/// Everything needed to synthesize a scene and its measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub rng_seed: u64,
    pub n_points: usize,
    pub direction_families: Vec<FamilyConfig>,
    pub trajectory: TrajectoryConfig,
    #[serde(rename = "K")]
    pub intrinsics: CameraIntrinsics,
    pub image: ImageSize,
    pub noise: NoiseConfig,
    pub outlier_fraction: f64,
    /// Per-frame segment budget `N_l`.
    #[serde(rename = "N_l")]
    pub segment_budget: usize,
    pub visibility: VisibilityConfig,
    /// Landmark spawn depth range, meters.
    pub depth_range: [f64; 2],
    /// 3D line length range, meters.
    pub line_length_range: [f64; 2],
    /// Shortest segment the detector reports, pixels.
    pub min_segment_px: f64,
}

/// Three mutually orthogonal unit directions, the world axes rotated by `yaw`
/// about y then `pitch` about x.
pub fn orthogonal_families(count: usize, yaw_deg: f64, pitch_deg: f64) -> Vec<FamilyConfig> {
    let r = Rotation3::from_axis_angle(&Vector3::x_axis(), pitch_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians());
    (0..3)
        .map(|i| {
            let d = r * Vector3::ith(i, 1.0);
            FamilyConfig { direction: [d.x, d.y, d.z], count }
        })
        .collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            n_points: 200,
            direction_families: orthogonal_families(20, 30.0, 20.0),
            trajectory: TrajectoryConfig::default(),
            intrinsics: CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0 },
            image: ImageSize { width: 640.0, height: 480.0 },
            noise: NoiseConfig::default(),
            outlier_fraction: 0.0,
            segment_budget: 50,
            visibility: VisibilityConfig::default(),
            depth_range: [2.0, 8.0],
            line_length_range: [1.0, 3.0],
            min_segment_px: 20.0,
        }
    }
}

impl ScenarioConfig {
    pub fn n_lines(&self) -> usize {
        self.direction_families.iter().map(|f| f.count).sum()
    }

    pub fn family_directions(&self) -> Vec<Vector3<f64>> {
        self.direction_families.iter().map(|f| Vector3::from(f.direction)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.intrinsics.validate()?;
        if self.trajectory.n_keyframes < 2 {
            return bad(format!("n_keyframes must be at least 2, got {}", self.trajectory.n_keyframes));
        }
        if !(self.trajectory.spacing > 0.0 && self.trajectory.dt > 0.0) {
            return bad("spacing and dt must be positive".into());
        }
        if self.n_points == 0 {
            return bad("n_points must be positive".into());
        }
        let n = &self.noise;
        if !(n.point_px >= 0.0 && n.line_px >= 0.0 && n.flow_px >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!("outlier_fraction must lie in [0, 1), got {}", self.outlier_fraction));
        }
        for f in &self.direction_families {
            let d = Vector3::from(f.direction);
            if (d.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("family direction {:?} is not unit", f.direction));
            }
            if f.count == 0 {
                return bad("family line counts must be positive".into());
            }
        }
        let [d0, d1] = self.depth_range;
        if !(0.0 < d0 && d0 < d1 && d1 <= self.visibility.max_range) {
            return bad(format!("depth range {d0}..{d1} must be increasing and within max_range"));
        }
        let [l0, l1] = self.line_length_range;
        if !(0.0 < l0 && l0 <= l1) {
            return bad("line length range must be positive and increasing".into());
        }
        if self.visibility.partition_block == Some(0) {
            return bad("partition_block must be positive".into());
        }
        if !(self.image.width > 0.0 && self.image.height > 0.0) {
            return bad("image size must be positive".into());
        }
        Ok(())
    }
}
