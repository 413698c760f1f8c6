//! Line-track maintenance, mapline verification gates and keyframe insertion.

pub mod gates;
mod tracking;

pub use gates::{
    overlap_gate, overlap_ratio, reprojection_gate, sensitivity_gate, verify_mapline, write_audit_csv, AuditRecord,
    GateFailure, GateThresholds, MaplineVerdict,
};
pub use tracking::{
    filter_short, keyframe_decision, match_predicted, match_score, merge_segments, segment_angle_deg, segment_normal,
    KeyframePolicy, KeyframeReason, LineTrack, MatchParams, MatchSource, TrackMatch,
};
