use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::gates::overlap_ratio;
use crate::error::{Error, Result};
use crate::vp::Segment2D;

/// Keeps segments of length at least `tau_s`, preserving order.
pub fn filter_short(segments: &[Segment2D], tau_s: f64) -> Vec<Segment2D> {
    segments.iter().filter(|s| s.length() >= tau_s).cloned().collect()
}

/// Unsigned angle between two segments' directions, degrees in `[0, 90]`.
pub fn segment_angle_deg(a: &Segment2D, b: &Segment2D) -> f64 {
    let da = a.end - a.start;
    let db = b.end - b.start;
    let cross = da.x * db.y - da.y * db.x;
    cross.abs().atan2(da.dot(&db).abs()).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Maximum midpoint distance, pixels.
    pub gate_mid_px: f64,
    /// Maximum direction difference, degrees.
    pub gate_angle_deg: f64,
    pub weight_angle: f64,
    pub weight_overlap: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { gate_mid_px: 20.0, gate_angle_deg: 3.0, weight_angle: 0.5, weight_overlap: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    Detected,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMatch {
    pub track_id: u64,
    pub segment: Segment2D,
    pub source: MatchSource,
    /// Score of the chosen representation; 0 for prediction-only continuations.
    pub score: f64,
    /// Id of the detection paired with the prediction, if any.
    pub detected_id: Option<u64>,
}

/// `w_a (1 - angle / g_ang) + w_o · overlap` of `candidate` against `reference`.
pub fn match_score(candidate: &Segment2D, reference: &Segment2D, params: &MatchParams) -> f64 {
    let angle = segment_angle_deg(candidate, reference);
    let (_, _, r) = overlap_ratio(&reference.start, &reference.end, &candidate.start, &candidate.end);
    params.weight_angle * (1.0 - angle / params.gate_angle_deg) + params.weight_overlap * r.clamp(0.0, 1.0)
}

fn passes_gates(a: &Segment2D, b: &Segment2D, params: &MatchParams) -> bool {
    (a.midpoint() - b.midpoint()).norm() < params.gate_mid_px && segment_angle_deg(a, b) < params.gate_angle_deg
}

/// Pairs flow-predicted segments with detections and picks a representative per track.
///
/// Pairs passing the geometric gates are assigned greedily by score. For each
/// pair, the detection and the prediction are both scored against the track's
/// reference segment when one is given (e.g. the projected mapline); the
/// higher score wins, ties going to the detection. Predictions left unpaired
/// continue as prediction-only observations.
pub fn match_predicted(
    predicted: &[Segment2D],
    detected: &[Segment2D],
    references: &BTreeMap<u64, Segment2D>,
    params: &MatchParams,
) -> Vec<TrackMatch> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        if p.track_id.is_none() {
            continue;
        }
        for (j, d) in detected.iter().enumerate() {
            if passes_gates(p, d, params) {
                candidates.push((match_score(d, p, params), i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(predicted[a.1].track_id.cmp(&predicted[b.1].track_id))
            .then(detected[a.2].id.cmp(&detected[b.2].id))
    });

    let mut pred_used = vec![false; predicted.len()];
    let mut det_used = vec![false; detected.len()];
    let mut out = Vec::new();
    for (pair_score, i, j) in candidates {
        if pred_used[i] || det_used[j] {
            continue;
        }
        pred_used[i] = true;
        det_used[j] = true;
        let p = &predicted[i];
        let d = &detected[j];
        let track_id = p.track_id.expect("filtered above");
        let (source, score) = match references.get(&track_id) {
            Some(r) => {
                let sd = match_score(d, r, params);
                let sp = match_score(p, r, params);
                if sp > sd {
                    (MatchSource::Predicted, sp)
                } else {
                    (MatchSource::Detected, sd)
                }
            }
            None => (MatchSource::Detected, pair_score),
        };
        let mut segment = match source {
            MatchSource::Detected => d.clone(),
            MatchSource::Predicted => p.clone(),
        };
        segment.track_id = Some(track_id);
        out.push(TrackMatch { track_id, segment, source, score, detected_id: Some(d.id) });
    }
    for (i, p) in predicted.iter().enumerate() {
        if let (false, Some(track_id)) = (pred_used[i], p.track_id) {
            out.push(TrackMatch {
                track_id,
                segment: p.clone(),
                source: MatchSource::Predicted,
                score: 0.0,
                detected_id: None,
            });
        }
    }
    out.sort_by_key(|m| m.track_id);
    out
}

/// Extends `curr` to cover both segments: all four endpoints are projected onto
/// `curr`'s infinite line and the extreme pair is kept. No image clipping.
pub fn merge_segments(prev: &Segment2D, curr: &Segment2D, max_angle_deg: f64) -> Result<Segment2D> {
    let angle = segment_angle_deg(prev, curr);
    if angle > max_angle_deg {
        return Err(Error::NotCollinear { angle_deg: angle });
    }
    let dir = curr.direction();
    let origin = curr.start;
    let params = [prev.start, prev.end, curr.start, curr.end].map(|p| (p - origin).dot(&dir));
    let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Segment2D { start: origin + dir * lo, end: origin + dir * hi, ..curr.clone() })
}

/// A line followed across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTrack {
    pub track_id: u64,
    /// `(frame_id, observation)` in strictly increasing frame order.
    pub observations: Vec<(u64, Segment2D)>,
    pub merged: bool,
}

impl LineTrack {
    pub fn new(track_id: u64, frame_id: u64, first: Segment2D) -> Self {
        Self { track_id, observations: vec![(frame_id, first)], merged: false }
    }

    pub fn age(&self) -> usize {
        self.observations.len()
    }

    pub fn last_frame(&self) -> u64 {
        self.observations.last().map(|o| o.0).unwrap_or(0)
    }

    /// Appends an observation; frames must increase.
    pub fn push(&mut self, frame_id: u64, seg: Segment2D) -> Result<()> {
        if self.observations.last().is_some_and(|(f, _)| *f >= frame_id) {
            return Err(Error::Config(format!(
                "track {} observation for frame {frame_id} is out of order",
                self.track_id
            )));
        }
        self.observations.push((frame_id, seg));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframePolicy {
    /// Age (observations) at which a track counts as persistent.
    pub min_age: usize,
    /// Number of persistent tracks that triggers insertion.
    pub n_persist: usize,
    /// Relative growth `ρ` of the tracked-line count that triggers insertion.
    pub growth: f64,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self { min_age: 10, n_persist: 10, growth: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeReason {
    Persistence,
    Growth,
}

/// Keyframe insertion from line-track persistence or growth.
pub fn keyframe_decision(
    tracks: &[LineTrack],
    last_kf_line_count: usize,
    policy: &KeyframePolicy,
) -> Option<KeyframeReason> {
    let persistent = tracks.iter().filter(|t| t.age() >= policy.min_age).count();
    if persistent >= policy.n_persist {
        return Some(KeyframeReason::Persistence);
    }
    if tracks.len() as f64 >= (1.0 + policy.growth) * last_kf_line_count as f64 && !tracks.is_empty() {
        return Some(KeyframeReason::Growth);
    }
    None
}

/// Unit normal of the segment's supporting line.
pub fn segment_normal(seg: &Segment2D) -> Vector2<f64> {
    let d = seg.direction();
    Vector2::new(-d.y, d.x)
}
