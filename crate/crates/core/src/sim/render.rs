use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::world::{World, WorldLine};
use crate::error::Result;
use crate::geom::Pose;
use crate::vp::Segment2D;

/// Nearest depth at which geometry is rendered, meters.
const NEAR: f64 = 0.1;
/// Segment ids are `frame * ID_STRIDE + index`.
pub const ID_STRIDE: u64 = 10_000;
const PREDICTED_OFFSET: u64 = ID_STRIDE / 2;
const DETECTION_STREAM: u64 = 100;
const PREDICTION_STREAM: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointObservation {
    pub landmark_id: u64,
    pub px: Vector2<f64>,
}

/// What the estimator sees in one keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservations {
    pub frame_id: u64,
    pub timestamp: f64,
    pub points: Vec<PointObservation>,
    pub segments: Vec<Segment2D>,
    /// Segments of the previous frame carried forward by flow; `track_id`
    /// holds the id of the previous-frame segment.
    pub predicted: Vec<Segment2D>,
}

/// Ground-truth labels of one detected segment. Only evaluation reads these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment_id: u64,
    pub line_id: Option<u64>,
    pub family: Option<usize>,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame_id: u64,
    pub segments: Vec<SegmentTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rendered {
    pub frames: Vec<FrameObservations>,
    pub truth: Vec<FrameTruth>,
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn in_image(config: &ScenarioConfig, p: &Vector2<f64>) -> bool {
    (0.0..=config.image.width).contains(&p.x) && (0.0..=config.image.height).contains(&p.y)
}

/// Liang–Barsky clip of `a → b` to the image rectangle.
fn clip_to_image(config: &ScenarioConfig, a: Vector2<f64>, b: Vector2<f64>) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let checks = [(-d.x, a.x), (d.x, config.image.width - a.x), (-d.y, a.y), (d.y, config.image.height - a.y)];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 < t1).then(|| (a + d * t0, a + d * t1))
}

/// Visible image extent of a world segment, before noise.
pub fn project_world_segment(
    config: &ScenarioConfig,
    pose: &Pose,
    line: &WorldLine,
) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let mut a = pose.transform_point(&line.start);
    let mut b = pose.transform_point(&line.end);
    if a.z < NEAR && b.z < NEAR {
        return None;
    }
    if a.z < NEAR || b.z < NEAR {
        let t = (NEAR - a.z) / (b.z - a.z);
        let cut = a + (b - a) * t;
        if a.z < NEAR {
            a = cut;
        } else {
            b = cut;
        }
    }
    if (0.5 * (a + b)).norm() > config.visibility.max_range {
        return None;
    }
    let k = &config.intrinsics;
    let (pa, pb) = (k.project(&a).ok()?, k.project(&b).ok()?);
    let (sa, sb) = clip_to_image(config, pa, pb)?;
    ((sb - sa).norm() >= config.min_segment_px).then_some((sa, sb))
}

fn visible_point(config: &ScenarioConfig, pose: &Pose, p_w: &Vector3<f64>) -> Option<Vector2<f64>> {
    let p_c = pose.transform_point(p_w);
    if p_c.z < NEAR || p_c.norm() > config.visibility.max_range {
        return None;
    }
    let px = config.intrinsics.project(&p_c).ok()?;
    in_image(config, &px).then_some(px)
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

fn noise2(rng: &mut ChaCha8Rng, n: &Normal<f64>) -> Vector2<f64> {
    Vector2::new(n.sample(rng), n.sample(rng))
}

fn random_segment(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> (Vector2<f64>, Vector2<f64>) {
    loop {
        let mut pick =
            || Vector2::new(rng.random_range(0.0..config.image.width), rng.random_range(0.0..config.image.height));
        let (a, b) = (pick(), pick());
        if (b - a).norm() >= config.min_segment_px {
            return (a, b);
        }
    }
}

struct Detection {
    segment: Segment2D,
    line_id: Option<u64>,
    /// Endpoint noise drawn for this detection.
    noise: (Vector2<f64>, Vector2<f64>),
}

fn detect_segments(config: &ScenarioConfig, world: &World, pose: &Pose, frame: usize) -> Vec<Detection> {
    let mut rng = frame_rng(config.rng_seed, DETECTION_STREAM + frame as u64);
    let mut visible: Vec<(u64, Vector2<f64>, Vector2<f64>)> = world
        .lines
        .iter()
        .filter(|l| (l.window.0..=l.window.1).contains(&frame))
        .filter_map(|l| project_world_segment(config, pose, l).map(|(a, b)| (l.id, a, b)))
        .collect();
    // longest first, ties by id
    visible.sort_by(|x, y| (y.2 - y.1).norm().total_cmp(&(x.2 - x.1).norm()).then(x.0.cmp(&y.0)));
    visible.truncate(config.segment_budget);
    visible.sort_by_key(|v| v.0);

    let n_out = (config.outlier_fraction * visible.len() as f64).round() as usize;
    let mut outlier_slots: Vec<usize> = sample(&mut rng, visible.len(), n_out).into_vec();
    outlier_slots.sort_unstable();
    let normal = gaussian(config.noise.line_px);

    visible
        .iter()
        .enumerate()
        .map(|(j, &(line_id, a, b))| {
            let id = frame as u64 * ID_STRIDE + j as u64;
            if outlier_slots.binary_search(&j).is_ok() {
                let (a, b) = random_segment(config, &mut rng);
                Detection {
                    segment: Segment2D::new(id, a, b),
                    line_id: None,
                    noise: (Vector2::zeros(), Vector2::zeros()),
                }
            } else {
                let noise = (noise2(&mut rng, &normal), noise2(&mut rng, &normal));
                Detection { segment: Segment2D::new(id, a + noise.0, b + noise.1), line_id: Some(line_id), noise }
            }
        })
        .collect()
}

/// Projects the world into every keyframe.
pub fn render_measurements(world: &World, poses: &[Pose], config: &ScenarioConfig) -> Result<Rendered> {
    config.validate()?;
    let line_by_id: BTreeMap<u64, &WorldLine> = world.lines.iter().map(|l| (l.id, l)).collect();
    let point_noise = gaussian(config.noise.point_px);
    let flow_noise = gaussian(config.noise.flow_px);

    let detections: Vec<Vec<Detection>> =
        poses.iter().enumerate().map(|(f, pose)| detect_segments(config, world, pose, f)).collect();

    let mut frames = Vec::with_capacity(poses.len());
    let mut truth = Vec::with_capacity(poses.len());
    for (f, pose) in poses.iter().enumerate() {
        let mut rng = frame_rng(config.rng_seed, PREDICTION_STREAM + f as u64);
        let points: Vec<PointObservation> = world
            .points
            .iter()
            .filter(|p| (p.window.0..=p.window.1).contains(&f))
            .filter_map(|p| {
                visible_point(config, pose, &p.position)
                    .map(|px| PointObservation { landmark_id: p.id, px: px + noise2(&mut rng, &point_noise) })
            })
            .collect();
        if points.len() < 8 {
            log::warn!("empty frame: frame {f} observes only {} points", points.len());
        }

        let mut predicted = Vec::new();
        if f > 0 {
            for (j, prev) in detections[f - 1].iter().enumerate() {
                let id = f as u64 * ID_STRIDE + PREDICTED_OFFSET + j as u64;
                let carried = match prev.line_id {
                    Some(lid) => {
                        let line = line_by_id[&lid];
                        if !(line.window.0..=line.window.1).contains(&f) {
                            continue;
                        }
                        match project_world_segment(config, pose, line) {
                            Some((a, b)) => (a + prev.noise.0, b + prev.noise.1),
                            None => continue,
                        }
                    }
                    None => (prev.segment.start, prev.segment.end),
                };
                let a = carried.0 + noise2(&mut rng, &flow_noise);
                let b = carried.1 + noise2(&mut rng, &flow_noise);
                predicted.push(Segment2D::new(id, a, b).with_track(prev.segment.id));
            }
        }

        truth.push(FrameTruth {
            frame_id: f as u64,
            segments: detections[f]
                .iter()
                .map(|d| SegmentTruth {
                    segment_id: d.segment.id,
                    line_id: d.line_id,
                    family: d.line_id.map(|l| line_by_id[&l].family),
                    outlier: d.line_id.is_none(),
                })
                .collect(),
        });
        frames.push(FrameObservations {
            frame_id: f as u64,
            timestamp: f as f64 * config.trajectory.dt,
            points,
            segments: detections[f].iter().map(|d| d.segment.clone()).collect(),
            predicted,
        });
    }
    Ok(Rendered { frames, truth })
}

/// One JSON object per line.
pub fn write_observations_jsonl<W: std::io::Write>(frames: &[FrameObservations], mut out: W) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, NoiseConfig, VisibilityConfig};
    use std::collections::BTreeSet;

    fn noiseless() -> ScenarioConfig {
        ScenarioConfig { noise: NoiseConfig { point_px: 0.0, line_px: 0.0, flow_px: 0.0 }, ..Default::default() }
    }

    #[test]
    fn noiseless_points_are_exact() {
        let sim = simulate(&noiseless()).unwrap();
        let k = &sim.config.intrinsics;
        for f in &sim.frames {
            assert!(f.points.len() >= 8);
            for o in &f.points {
                let p = sim.world.points[o.landmark_id as usize].position;
                let px = k.project(&sim.poses[f.frame_id as usize].transform_point(&p)).unwrap();
                assert!((px - o.px).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_segments_lie_on_their_lines() {
        let sim = simulate(&noiseless()).unwrap();
        for (f, t) in sim.frames.iter().zip(&sim.truth) {
            let pose = &sim.poses[f.frame_id as usize];
            for (s, st) in f.segments.iter().zip(&t.segments) {
                let line = &sim.world.lines[st.line_id.unwrap() as usize];
                let l = crate::geom::project_world_line(&line.plucker, pose, &sim.config.intrinsics).unwrap();
                let l = crate::geom::normalize_image_line(&l);
                for p in [s.start, s.end] {
                    assert!(l.dot(&Vector3::new(p.x, p.y, 1.0)).abs() < 1e-9);
                }
            }
            assert!(f.segments.len() <= sim.config.segment_budget);
        }
    }

    #[test]
    fn outlier_count_is_exact() {
        let config = ScenarioConfig {
            outlier_fraction: 0.2,
            segment_budget: 50,
            direction_families: crate::sim::orthogonal_families(40, 30.0, 20.0),
            ..Default::default()
        };
        let sim = simulate(&config).unwrap();
        let mut checked = 0;
        for t in &sim.truth {
            let n = t.segments.len();
            let outliers = t.segments.iter().filter(|s| s.outlier).count();
            assert_eq!(outliers, (0.2 * n as f64).round() as usize);
            if n == 50 {
                assert_eq!(outliers, 10);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn partitioned_frames_share_no_landmarks() {
        let mut config = ScenarioConfig::default();
        config.trajectory.n_keyframes = 60;
        config.visibility = VisibilityConfig { partition_block: Some(10), ..Default::default() };
        let sim = simulate(&config).unwrap();
        let ids = |f: usize| -> BTreeSet<u64> { sim.frames[f].points.iter().map(|o| o.landmark_id).collect() };
        let lines = |f: usize| -> BTreeSet<u64> { sim.truth[f].segments.iter().filter_map(|s| s.line_id).collect() };
        assert!(ids(1).is_disjoint(&ids(50)));
        assert!(lines(1).is_disjoint(&lines(50)));
        let fam0 = |f: usize| sim.truth[f].segments.iter().any(|s| s.family == Some(0));
        assert!(fam0(1) && fam0(50));
    }

    #[test]
    fn predictions_follow_previous_segments() {
        let sim = simulate(&noiseless()).unwrap();
        let prev: BTreeSet<u64> = sim.frames[0].segments.iter().map(|s| s.id).collect();
        assert!(sim.frames[0].predicted.is_empty());
        assert!(!sim.frames[1].predicted.is_empty());
        for p in &sim.frames[1].predicted {
            assert!(prev.contains(&p.track_id.unwrap()));
        }
    }

    #[test]
    fn dump_is_reproducible() {
        let dump = || {
            let sim = simulate(&ScenarioConfig::default()).unwrap();
            let mut buf = Vec::new();
            write_observations_jsonl(&sim.frames, &mut buf).unwrap();
            buf
        };
        let a = dump();
        assert_eq!(a, dump());
        assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 20);
    }

    #[test]
    fn clipping() {
        let c = ScenarioConfig::default();
        let (a, b) = clip_to_image(&c, Vector2::new(-100.0, 100.0), Vector2::new(700.0, 100.0)).unwrap();
        assert_eq!((a.x, b.x), (0.0, 640.0));
        assert!(clip_to_image(&c, Vector2::new(-100.0, -10.0), Vector2::new(700.0, -10.0)).is_none());
    }
}
