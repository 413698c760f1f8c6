//! End-to-end driver: simulate, track, detect, associate, optimize, evaluate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ate_rmse_with, Alignment, Trajectory};
use crate::geom::{
    closest_point_on_line_to_ray, triangulate_line, triangulate_point, CameraIntrinsics, OrthonormalLine, Pose,
};
use crate::graph::{
    optimize, CostBreakdown, Factor, FactorGraph, FactorKind, LineFactor, OptimizationReport, OptimizerOptions,
    PointFactor, StructFactor, VarKey, VdAlignFactor, CHI2_95_1DOF, CHI2_95_2DOF,
};
use crate::lines::{
    filter_short, keyframe_decision, match_predicted, merge_segments, verify_mapline, AuditRecord, GateThresholds,
    KeyframePolicy, KeyframeReason, LineTrack, MatchParams,
};
use crate::primitives::{
    build_association_graph, GpAssociationGraph, GpRegistry, LiftedDirection, DEFAULT_FUSE_TOL_DEG,
};
use crate::sim::{simulate, ScenarioConfig, Simulation};
use crate::vp::{detect_vanishing_points, lift_vanishing_point, Segment2D, VpParams};

const PERTURBATION_STREAM: u64 = 7;
/// Smallest viewing-ray angle accepted for point triangulation, degrees.
const MIN_TRIANGULATION_ANGLE_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Points and lines only.
    Lp,
    /// Points and lines plus vanishing-direction primitives.
    Gp,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Lp => "lp",
            Mode::Gp => "gp",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" => Ok(Mode::Lp),
            "gp" => Ok(Mode::Gp),
            other => Err(Error::Config(format!("unknown mode {other:?}, expected lp or gp"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Per-axis σ of the initial rotation error, degrees.
    pub init_rotation_deg: f64,
    /// Per-axis σ of the initial translation error, meters.
    pub init_translation_m: f64,
    pub vp: VpParams,
    pub fuse_tol_deg: f64,
    pub gates: GateThresholds,
    pub matching: MatchParams,
    pub keyframe: KeyframePolicy,
    /// Largest angle at which a tracked segment is merged with its prediction, degrees.
    pub merge_max_angle_deg: f64,
    pub sigma_px: f64,
    pub sigma_vd: f64,
    pub sigma_str: f64,
    /// Huber kernel on all factors.
    pub robust: bool,
    /// Share of a mapline's observations that must belong to one primitive
    /// before a structural factor links them.
    pub struct_min_fraction: f64,
    pub optimizer: OptimizerOptions,
    pub alignment: Alignment,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            init_rotation_deg: 1.0,
            init_translation_m: 0.05,
            vp: VpParams::default(),
            fuse_tol_deg: DEFAULT_FUSE_TOL_DEG,
            gates: GateThresholds::default(),
            matching: MatchParams::default(),
            keyframe: KeyframePolicy::default(),
            merge_max_angle_deg: 3.0,
            sigma_px: 1.0,
            sigma_vd: 0.02,
            sigma_str: 0.01,
            robust: true,
            struct_min_fraction: 0.5,
            optimizer: OptimizerOptions::default(),
            alignment: Alignment::Similarity,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gates.validate()?;
        let positive = [
            ("sigma_px", self.sigma_px),
            ("sigma_vd", self.sigma_vd),
            ("sigma_str", self.sigma_str),
            ("fuse_tol_deg", self.fuse_tol_deg),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.init_rotation_deg >= 0.0 && self.init_translation_m >= 0.0) {
            return Err(Error::Config("initial perturbation must be non-negative".into()));
        }
        Ok(())
    }
}

/// A scenario plus the estimator settings used on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { name: "corridor".into(), scenario: ScenarioConfig::default(), pipeline: PipelineConfig::default() }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.pipeline.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.rng_seed = seed;
        self
    }
}

/// Summary written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub ate_rmse_m: f64,
    pub initial_ate_m: f64,
    pub iters: usize,
    pub converged: bool,
    pub n_gps: usize,
    pub cost_breakdown: CostBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeEvent {
    pub frame_id: u64,
    pub tracked_lines: usize,
    pub reason: Option<KeyframeReason>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub metrics: Metrics,
    pub estimated: Trajectory,
    pub initial: Trajectory,
    pub ground_truth: Trajectory,
    /// Reports of the first (all factors) and second (gated) optimization.
    pub stage_reports: Vec<OptimizationReport>,
    pub report: OptimizationReport,
    pub audit: Vec<AuditRecord>,
    pub registry: GpRegistry,
    pub association_graph: GpAssociationGraph,
    pub graph: FactorGraph,
    pub keyframes: Vec<KeyframeEvent>,
    pub tracks: Vec<LineTrack>,
}

fn trajectory(sim: &Simulation, poses: &[Pose]) -> Result<Trajectory> {
    Trajectory::new(sim.frames.iter().zip(poses).map(|(f, p)| (f.timestamp, *p)).collect())
}

/// Ground truth with independent left perturbations; the first pose is kept exact.
fn perturbed_poses(sim: &Simulation, config: &PipelineConfig) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.config.rng_seed);
    rng.set_stream(PERTURBATION_STREAM);
    let rot = Normal::new(0.0, config.init_rotation_deg.to_radians()).expect("validated");
    let trans = Normal::new(0.0, config.init_translation_m).expect("validated");
    sim.poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let xi = Vector6::new(
                trans.sample(&mut rng),
                trans.sample(&mut rng),
                trans.sample(&mut rng),
                rot.sample(&mut rng),
                rot.sample(&mut rng),
                rot.sample(&mut rng),
            );
            if i == 0 {
                *p
            } else {
                p.retract(&xi)
            }
        })
        .collect()
}

fn ray_angle(a: &Vector2<f64>, b: &Vector2<f64>, pa: &Pose, pb: &Pose, k: &CameraIntrinsics) -> f64 {
    let ra = pa.rotation_wc() * k.unproject(a);
    let rb = pb.rotation_wc() * k.unproject(b);
    ra.cross(&rb).norm().atan2(ra.dot(&rb))
}

/// Midpoint triangulation from the widest-angle pair of observations.
fn triangulate_points(sim: &Simulation, poses: &[Pose]) -> BTreeMap<u64, Vector3<f64>> {
    let k = &sim.config.intrinsics;
    let mut obs: BTreeMap<u64, Vec<(usize, Vector2<f64>)>> = BTreeMap::new();
    for (f, frame) in sim.frames.iter().enumerate() {
        for o in &frame.points {
            obs.entry(o.landmark_id).or_default().push((f, o.px));
        }
    }
    let mut out = BTreeMap::new();
    for (id, list) in obs {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                let angle = ray_angle(&list[i].1, &list[j].1, &poses[list[i].0], &poses[list[j].0], k);
                if best.is_none_or(|b| angle > b.0) {
                    best = Some((angle, i, j));
                }
            }
        }
        let Some((angle, i, j)) = best else { continue };
        if angle.to_degrees() < MIN_TRIANGULATION_ANGLE_DEG {
            continue;
        }
        let (fa, a) = list[i];
        let (fb, b) = list[j];
        if let Ok(p) = triangulate_point(&a, &b, &poses[fa], &poses[fb], k) {
            if list.iter().all(|(f, _)| poses[*f].transform_point(&p).z > 0.0) {
                out.insert(id, p);
            }
        }
    }
    out
}

struct Tracking {
    tracks: BTreeMap<u64, LineTrack>,
    keyframes: Vec<KeyframeEvent>,
}

/// Follows segments through flow predictions; unmatched detections open new tracks.
fn track_lines(sim: &Simulation, config: &PipelineConfig) -> Tracking {
    let mut tracks: BTreeMap<u64, LineTrack> = BTreeMap::new();
    let mut seg_to_track: BTreeMap<u64, u64> = BTreeMap::new();
    let mut keyframes = Vec::new();
    let mut last_kf_lines = 0usize;
    let mut next_id = 0u64;
    for frame in &sim.frames {
        let f = frame.frame_id;
        let detected = filter_short(&frame.segments, config.gates.tau_s);
        let predictions: Vec<Segment2D> = frame
            .predicted
            .iter()
            .filter_map(|p| {
                let t = *seg_to_track.get(&p.track_id?)?;
                Some(p.clone().with_track(t))
            })
            .collect();
        let pred_by_track: BTreeMap<u64, &Segment2D> =
            predictions.iter().map(|p| (p.track_id.unwrap_or(0), p)).collect();
        let matches = match_predicted(&predictions, &detected, &BTreeMap::new(), &config.matching);

        let mut next_map = BTreeMap::new();
        let mut claimed = BTreeSet::new();
        for m in &matches {
            let Some(det_id) = m.detected_id else { continue };
            let Some(det) = detected.iter().find(|d| d.id == det_id) else { continue };
            let track = tracks.get_mut(&m.track_id).expect("predictions map to live tracks");
            let mut obs = det.clone();
            if let Some(pred) = pred_by_track.get(&m.track_id) {
                if let Ok(merged) = merge_segments(pred, det, config.merge_max_angle_deg) {
                    if merged.length() > det.length() + 0.5 {
                        track.merged = true;
                    }
                    obs = merged;
                }
            }
            obs.track_id = Some(m.track_id);
            if track.push(f, obs).is_ok() {
                next_map.insert(det_id, m.track_id);
                claimed.insert(det_id);
            }
        }
        for d in &detected {
            if claimed.contains(&d.id) {
                continue;
            }
            let id = next_id;
            next_id += 1;
            tracks.insert(id, LineTrack::new(id, f, d.clone().with_track(id)));
            next_map.insert(d.id, id);
        }
        seg_to_track = next_map;

        let alive: Vec<LineTrack> = tracks.values().filter(|t| t.last_frame() == f).cloned().collect();
        let reason = keyframe_decision(&alive, last_kf_lines, &config.keyframe);
        if reason.is_some() || f == 0 {
            last_kf_lines = alive.len();
        }
        log::debug!("frame {f}: {} tracked lines, keyframe trigger {reason:?}", alive.len());
        keyframes.push(KeyframeEvent { frame_id: f, tracked_lines: alive.len(), reason });
    }
    Tracking { tracks, keyframes }
}

/// Plane-intersection triangulation from the pair of observations whose
/// back-projected planes meet at the widest angle.
fn triangulate_track(track: &LineTrack, poses: &[Pose], k: &CameraIntrinsics) -> Option<OrthonormalLine> {
    let normals: Vec<Vector3<f64>> = track
        .observations
        .iter()
        .map(|(f, s)| {
            (poses[*f as usize].rotation_wc() * k.unproject(&s.start).cross(&k.unproject(&s.end))).normalize()
        })
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..normals.len() {
        for j in i + 1..normals.len() {
            let s = normals[i].cross(&normals[j]).norm();
            if best.is_none_or(|b| s > b.0) {
                best = Some((s, i, j));
            }
        }
    }
    let (_, i, j) = best?;
    let (fa, sa) = &track.observations[i];
    let (fb, sb) = &track.observations[j];
    let line = triangulate_line(sa, sb, &poses[*fa as usize], &poses[*fb as usize], k).ok()?;
    // both observed endpoints of the first view must lie in front of the camera
    let pose = &poses[*fa as usize];
    let in_front = [sa.start, sa.end]
        .iter()
        .all(|px| pose.transform_point(&closest_point_on_line_to_ray(&line, px, pose, k)).z > 0.0);
    in_front.then(|| OrthonormalLine::from_plucker(&line))
}

/// Projection of the mapline stretch that the observed endpoints see.
fn projected_segment(line: &OrthonormalLine, obs: &Segment2D, pose: &Pose, k: &CameraIntrinsics) -> Option<Segment2D> {
    let l = line.to_plucker();
    let ps = closest_point_on_line_to_ray(&l, &obs.start, pose, k);
    let pe = closest_point_on_line_to_ray(&l, &obs.end, pose, k);
    let a = k.project(&pose.transform_point(&ps)).ok()?;
    let b = k.project(&pose.transform_point(&pe)).ok()?;
    Some(Segment2D::new(obs.id, a, b))
}

struct GpStage {
    registry: GpRegistry,
    /// Segment id → (frame, primitive) for every associated segment.
    segment_gp: BTreeMap<u64, (u64, u64)>,
}

fn detect_and_associate(sim: &Simulation, poses: &[Pose], config: &PipelineConfig) -> Result<GpStage> {
    let k = &sim.config.intrinsics;
    let mut registry = GpRegistry::new();
    let mut segment_gp = BTreeMap::new();
    for frame in &sim.frames {
        let segs = filter_short(&frame.segments, config.gates.tau_s);
        let seed = sim.config.rng_seed.wrapping_mul(1_000_003) ^ frame.frame_id;
        let estimates = match detect_vanishing_points(&segs, &config.vp, seed) {
            Ok(e) => e,
            Err(Error::TooFewSegments(_)) => continue,
            Err(e) => return Err(e),
        };
        let r_wc = poses[frame.frame_id as usize].rotation_wc();
        let lifted: Vec<LiftedDirection> = estimates
            .iter()
            .map(|e| LiftedDirection {
                direction: lift_vanishing_point(&e.vp, k, &r_wc),
                segment_ids: e.member_segment_ids.iter().copied().collect(),
            })
            .collect();
        for (gp, ids) in
            registry.associate_frame(frame.frame_id, &lifted, sim.config.segment_budget, config.fuse_tol_deg)
        {
            for id in ids {
                segment_gp.insert(id, (frame.frame_id, gp));
            }
        }
    }
    Ok(GpStage { registry, segment_gp })
}

fn huber(config: &PipelineConfig, chi2: f64) -> Option<f64> {
    config.robust.then(|| chi2.sqrt())
}

/// Runs the pipeline on a scenario given inline.
pub fn run_config(config: &RunConfig, mode: Mode) -> Result<PipelineOutput> {
    config.validate()?;
    let sim = simulate(&config.scenario).map_err(|e| e.at_stage("simulate"))?;
    run_on_simulation(&sim, config, mode)
}

/// Runs the pipeline on a JSON config file.
pub fn run_pipeline(config_path: &Path, mode: Mode) -> Result<PipelineOutput> {
    let config = RunConfig::load(config_path).map_err(|e| e.at_stage("config"))?;
    run_config(&config, mode)
}

/// Runs the estimator on an already generated scenario.
pub fn run_on_simulation(sim: &Simulation, config: &RunConfig, mode: Mode) -> Result<PipelineOutput> {
    let pc = &config.pipeline;
    let k = sim.config.intrinsics;
    let init = perturbed_poses(sim, pc);
    let ground_truth = trajectory(sim, &sim.poses).map_err(|e| e.at_stage("initialize"))?;
    let initial = trajectory(sim, &init).map_err(|e| e.at_stage("initialize"))?;

    let points = triangulate_points(sim, &init);
    let tracking = track_lines(sim, pc);
    let maplines: BTreeMap<u64, OrthonormalLine> = tracking
        .tracks
        .values()
        .filter(|t| t.age() >= 2)
        .filter_map(|t| triangulate_track(t, &init, &k).map(|l| (t.track_id, l)))
        .collect();
    log::info!("{} points, {} tracks, {} maplines", points.len(), tracking.tracks.len(), maplines.len());

    let gp = match mode {
        Mode::Gp => Some(detect_and_associate(sim, &init, pc).map_err(|e| e.at_stage("detect_vp"))?),
        Mode::Lp => None,
    };

    let mut graph = FactorGraph::new(k);
    for (i, p) in init.iter().enumerate() {
        graph.values.poses.insert(i as u64, *p);
    }
    graph.values.points = points;
    let cov = Matrix2::identity() * pc.sigma_px * pc.sigma_px;
    let build = |graph: &mut FactorGraph, f: Factor| graph.add_factor(f).map_err(|e| e.at_stage("build_graph"));
    for frame in &sim.frames {
        for o in &frame.points {
            if graph.values.points.contains_key(&o.landmark_id) {
                build(
                    &mut graph,
                    Factor::Point(PointFactor {
                        pose: frame.frame_id,
                        point: o.landmark_id,
                        obs: o.px,
                        covariance: cov,
                        huber: huber(pc, CHI2_95_2DOF),
                    }),
                )?;
            }
        }
    }
    let mut maplines = maplines;
    if let Some(gp) = &gp {
        for g in gp.registry.primitives() {
            graph.values.gps.insert(g.id, g.direction);
        }
        // orient lines along their primitive before structural factors see them
        for (tid, line) in maplines.iter_mut() {
            let track = &tracking.tracks[tid];
            if let Some(g) = dominant_gp(track, &gp.segment_gp, pc.struct_min_fraction) {
                if line.unit_direction().dot(&graph.values.gps[&g]) < 0.0 {
                    *line = line.flipped();
                }
            }
        }
    }
    graph.values.lines = maplines.clone();
    for tid in maplines.keys() {
        for (f, seg) in &tracking.tracks[tid].observations {
            build(
                &mut graph,
                Factor::Line(LineFactor {
                    pose: *f,
                    line: *tid,
                    obs: seg.clone(),
                    covariance: cov,
                    huber: huber(pc, CHI2_95_2DOF),
                }),
            )?;
        }
    }
    if let Some(gp) = &gp {
        let segments: BTreeMap<u64, &Segment2D> =
            sim.frames.iter().flat_map(|f| f.segments.iter().map(|s| (s.id, s))).collect();
        for (sid, (frame, g)) in &gp.segment_gp {
            build(
                &mut graph,
                Factor::VdAlign(VdAlignFactor {
                    pose: *frame,
                    gp: *g,
                    segment: segments[sid].clone(),
                    sigma: pc.sigma_vd,
                    huber: huber(pc, CHI2_95_1DOF),
                }),
            )?;
        }
        for tid in maplines.keys() {
            if let Some(g) = dominant_gp(&tracking.tracks[tid], &gp.segment_gp, pc.struct_min_fraction) {
                build(
                    &mut graph,
                    Factor::Struct(StructFactor {
                        line: *tid,
                        gp: g,
                        sigma: pc.sigma_str,
                        huber: huber(pc, CHI2_95_1DOF),
                    }),
                )?;
            }
        }
    }

    let mut options = pc.optimizer.clone();
    options.fixed_variable_keys.insert(VarKey::Pose(0));
    let stage1 = optimize(&mut graph, &options).map_err(|e| e.at_stage("optimize"))?;

    // mapline gates on the refined map, then drop failing observations
    let mut audit = Vec::new();
    let mut rejected: BTreeSet<(u64, u64)> = BTreeSet::new();
    for (tid, line) in &graph.values.lines {
        for (f, seg) in &tracking.tracks[tid].observations {
            let pose = &graph.values.poses[f];
            match projected_segment(line, seg, pose, &k) {
                Some(proj) => {
                    let verdict = verify_mapline(*f, *tid, seg, &proj, &pc.gates);
                    if !verdict.passed {
                        rejected.insert((*f, *tid));
                    }
                    audit.extend(verdict.records);
                }
                None => {
                    rejected.insert((*f, *tid));
                }
            }
        }
    }
    let values = graph.values.clone();
    let mut kept = Vec::with_capacity(graph.factors.len());
    for f in std::mem::take(&mut graph.factors) {
        let keep = match &f {
            Factor::Line(l) => !rejected.contains(&(l.pose, l.line)),
            Factor::VdAlign(_) | Factor::Struct(_) => f.chi2(&values, &k).map(|c| c <= CHI2_95_1DOF).unwrap_or(false),
            Factor::Point(_) => true,
        };
        if keep {
            kept.push(f);
        }
    }
    graph.factors = kept;
    prune_lines(&mut graph);
    log::info!(
        "gates rejected {} line observations; {} line, {} vd, {} struct factors remain",
        rejected.len(),
        graph.count(FactorKind::Line),
        graph.count(FactorKind::VdAlign),
        graph.count(FactorKind::Struct)
    );

    let stage2 = optimize(&mut graph, &options).map_err(|e| e.at_stage("optimize"))?;

    let mut registry = gp.map(|g| g.registry).unwrap_or_default();
    for (id, dir) in &graph.values.gps {
        registry.set_direction(*id, *dir);
    }
    let association_graph = build_association_graph(&registry);

    let est_poses: Vec<Pose> = (0..sim.poses.len() as u64).map(|i| graph.values.poses[&i]).collect();
    let estimated = trajectory(sim, &est_poses).map_err(|e| e.at_stage("evaluate"))?;
    let ate = ate_rmse_with(&estimated, &ground_truth, pc.alignment).map_err(|e| e.at_stage("evaluate"))?;
    let initial_ate = ate_rmse_with(&initial, &ground_truth, pc.alignment).map_err(|e| e.at_stage("evaluate"))?;

    let metrics = Metrics {
        scenario: config.name.clone(),
        mode,
        seed: sim.config.rng_seed,
        ate_rmse_m: ate,
        initial_ate_m: initial_ate,
        iters: stage1.iters + stage2.iters,
        converged: stage2.converged,
        n_gps: registry.len(),
        cost_breakdown: stage2.per_factor_type_cost_breakdown,
    };
    Ok(PipelineOutput {
        metrics,
        estimated,
        initial,
        ground_truth,
        stage_reports: vec![stage1, stage2.clone()],
        report: stage2,
        audit,
        registry,
        association_graph,
        graph,
        keyframes: tracking.keyframes,
        tracks: tracking.tracks.into_values().collect(),
    })
}

/// Primitive holding at least `min_fraction` of the track's observations.
fn dominant_gp(track: &LineTrack, segment_gp: &BTreeMap<u64, (u64, u64)>, min_fraction: f64) -> Option<u64> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, seg) in &track.observations {
        if let Some((_, g)) = segment_gp.get(&seg.id) {
            *counts.entry(*g).or_default() += 1;
        }
    }
    let (g, n) = counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?;
    (n as f64 >= min_fraction * track.age() as f64).then_some(g)
}

/// Removes lines left with fewer than two reprojection factors, and their
/// structural factors.
fn prune_lines(graph: &mut FactorGraph) {
    let mut support: BTreeMap<u64, usize> = BTreeMap::new();
    for f in &graph.factors {
        if let Factor::Line(l) = f {
            *support.entry(l.line).or_default() += 1;
        }
    }
    let weak: BTreeSet<u64> =
        graph.values.lines.keys().filter(|id| support.get(id).copied().unwrap_or(0) < 2).copied().collect();
    graph.factors.retain(|f| match f {
        Factor::Line(l) => !weak.contains(&l.line),
        Factor::Struct(s) => !weak.contains(&s.line),
        _ => true,
    });
    graph.values.lines.retain(|id, _| !weak.contains(id));
}

/// Writes metrics, trajectories, reports, the gate audit and the primitive registry.
pub fn write_run_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = |v: &dyn erased::Json| v.pretty();
    std::fs::write(dir.join("metrics.json"), json(&out.metrics)?)?;
    std::fs::write(dir.join("optimization_report.json"), json(&out.report)?)?;
    crate::eval::save_tum(&out.estimated, &dir.join("trajectory_est.txt"))?;
    crate::eval::save_tum(&out.ground_truth, &dir.join("trajectory_gt.txt"))?;
    crate::eval::save_tum(&out.initial, &dir.join("trajectory_init.txt"))?;
    let mut audit = Vec::new();
    crate::lines::write_audit_csv(&out.audit, &mut audit)?;
    std::fs::write(dir.join("gate_audit.csv"), audit)?;
    let mut registry = serde_json::to_string_pretty(&out.registry.to_json())?;
    registry.push('\n');
    std::fs::write(dir.join("gp_registry.json"), registry)?;
    Ok(())
}

mod erased {
    use serde::Serialize;

    pub trait Json {
        fn pretty(&self) -> crate::error::Result<String>;
    }

    impl<T: Serialize> Json for T {
        fn pretty(&self) -> crate::error::Result<String> {
            let mut s = serde_json::to_string_pretty(self)?;
            s.push('\n');
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub ate_lp: Option<f64>,
    pub ate_gp: Option<f64>,
    pub error: Option<String>,
}

/// Paired LP / GP errors over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub scenario: String,
    pub seeds: Vec<SeedOutcome>,
    pub completed: usize,
    pub mean_ate_lp: f64,
    pub mean_ate_gp: f64,
    pub median_ate_lp: f64,
    pub median_ate_gp: f64,
    /// `(1 − mean_gp / mean_lp) · 100`.
    pub reduction_pct: f64,
}

/// Smallest share of seeds that must complete for an ablation to count.
pub const MIN_SEED_SUCCESS: f64 = 0.8;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl AblationReport {
    pub fn from_outcomes(scenario: String, seeds: Vec<SeedOutcome>) -> Result<Self> {
        let done: Vec<(f64, f64)> = seeds.iter().filter_map(|s| Some((s.ate_lp?, s.ate_gp?))).collect();
        if (done.len() as f64) < MIN_SEED_SUCCESS * seeds.len() as f64 || done.is_empty() {
            return Err(
                Error::Config(format!("only {} of {} seeds completed", done.len(), seeds.len())).at_stage("ablate")
            );
        }
        let n = done.len() as f64;
        let mean_lp = done.iter().map(|d| d.0).sum::<f64>() / n;
        let mean_gp = done.iter().map(|d| d.1).sum::<f64>() / n;
        Ok(Self {
            scenario,
            completed: done.len(),
            mean_ate_lp: mean_lp,
            mean_ate_gp: mean_gp,
            median_ate_lp: median(done.iter().map(|d| d.0).collect()),
            median_ate_gp: median(done.iter().map(|d| d.1).collect()),
            reduction_pct: (1.0 - mean_gp / mean_lp) * 100.0,
            seeds,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,ate_lp,ate_gp,error\n");
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.seeds {
            let err = s.error.as_deref().unwrap_or("").replace(',', ";");
            out.push_str(&format!("{},{},{},{}\n", s.seed, f(s.ate_lp), f(s.ate_gp), err));
        }
        out
    }
}

/// Runs both modes on `n_seeds` consecutive seeds starting at the config's seed.
/// Both modes of a seed share the same world, noise and initialization.
pub fn run_ablation_config(config: &RunConfig, n_seeds: usize) -> Result<AblationReport> {
    if n_seeds < 2 {
        return Err(Error::Config(format!("ablation needs at least 2 seeds, got {n_seeds}")));
    }
    config.validate()?;
    let base = config.scenario.rng_seed;
    let outcomes: Vec<SeedOutcome> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base + i;
            let cfg = config.clone().with_seed(seed);
            let run = || -> Result<(f64, f64)> {
                let sim = simulate(&cfg.scenario).map_err(|e| e.at_stage("simulate"))?;
                let lp = run_on_simulation(&sim, &cfg, Mode::Lp)?;
                let gp = run_on_simulation(&sim, &cfg, Mode::Gp)?;
                Ok((lp.metrics.ate_rmse_m, gp.metrics.ate_rmse_m))
            };
            match run() {
                Ok((lp, gp)) => SeedOutcome { seed, ate_lp: Some(lp), ate_gp: Some(gp), error: None },
                Err(e) => {
                    log::warn!("seed {seed} failed: {e}");
                    SeedOutcome { seed, ate_lp: None, ate_gp: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    AblationReport::from_outcomes(config.name.clone(), outcomes)
}

pub fn run_ablation(config_path: &Path, n_seeds: usize) -> Result<AblationReport> {
    let config = RunConfig::load(config_path).map_err(|e| e.at_stage("config"))?;
    run_ablation_config(&config, n_seeds)
}
