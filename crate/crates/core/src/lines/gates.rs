//! Mapline verification gates.
//!
//! Three checks compare an observed segment ("original") against the projection
//! of its 3D mapline ("projected"): midpoint distance plus endpoint
//! perpendicular distance, the sensitivity angle of the midpoint displacement,
//! and the overlap ratio along the observed segment.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vp::{point_line_distance, Segment2D};

/// Midpoint displacements below this length (pixels) skip the sensitivity test.
pub const MIN_DISPLACEMENT_PX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateThresholds {
    /// Minimum segment length, pixels.
    pub tau_s: f64,
    /// Midpoint distance threshold, pixels, despite the angular-sounding name.
    pub theta_thre: f64,
    /// Endpoint perpendicular distance threshold, pixels.
    pub d_thre: f64,
    /// Sensitivity threshold, degrees.
    pub alpha_thre: f64,
    /// Minimum overlap ratio in `[0, 1]`.
    pub r_thre: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { tau_s: 15.0, theta_thre: 4.0, d_thre: 3.0, alpha_thre: 30.0, r_thre: 0.3 }
    }
}

impl GateThresholds {
    pub fn validate(&self) -> Result<()> {
        let all_positive =
            [self.tau_s, self.theta_thre, self.d_thre, self.alpha_thre, self.r_thre].iter().all(|v| *v > 0.0);
        if !all_positive || self.r_thre > 1.0 {
            return Err(Error::Config(format!("invalid gate thresholds {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFailure {
    Midpoint,
    Perpendicular,
    Sensitivity,
    Overlap,
}

impl GateFailure {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateFailure::Midpoint => "midpoint",
            GateFailure::Perpendicular => "perpendicular",
            GateFailure::Sensitivity => "sensitivity",
            GateFailure::Overlap => "overlap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionOutcome {
    pub midpoint_distance: f64,
    pub perpendicular_distance: f64,
    pub failure: Option<GateFailure>,
}

impl ReprojectionOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Midpoint distance `||p_ori - p_proj||` and `d = max(d_s, d_e)` against their thresholds.
pub fn reprojection_gate(
    p_ori_mid: &Vector2<f64>,
    p_proj_mid: &Vector2<f64>,
    d_s: f64,
    d_e: f64,
    theta_thre: f64,
    d_thre: f64,
) -> ReprojectionOutcome {
    let midpoint_distance = (p_ori_mid - p_proj_mid).norm();
    let perpendicular_distance = d_s.abs().max(d_e.abs());
    let failure = if midpoint_distance > theta_thre {
        Some(GateFailure::Midpoint)
    } else if perpendicular_distance > d_thre {
        Some(GateFailure::Perpendicular)
    } else {
        None
    };
    ReprojectionOutcome { midpoint_distance, perpendicular_distance, failure }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOutcome {
    /// Angle between the line direction and the midpoint displacement, degrees.
    pub alpha_deg: f64,
    pub passed: bool,
}

/// Rejects displacements that slide along the line: fails when `90° - α > α_thre`.
pub fn sensitivity_gate(
    v_ori: &Vector2<f64>,
    p_ori_mid: &Vector2<f64>,
    p_proj_mid: &Vector2<f64>,
    alpha_thre: f64,
) -> SensitivityOutcome {
    let disp = p_proj_mid - p_ori_mid;
    if disp.norm() < MIN_DISPLACEMENT_PX {
        return SensitivityOutcome { alpha_deg: 90.0, passed: true };
    }
    let v_proj = disp.normalize();
    let cos_alpha = v_ori.dot(&v_proj).abs().min(1.0);
    let alpha_deg = cos_alpha.acos().to_degrees();
    SensitivityOutcome { alpha_deg, passed: 90.0 - alpha_deg <= alpha_thre }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapOutcome {
    pub r1: f64,
    pub r2: f64,
    pub r: f64,
    pub passed: bool,
}

/// Overlap ratio of the projected segment along the original one.
pub fn overlap_gate(
    p_ori_s: &Vector2<f64>,
    p_ori_e: &Vector2<f64>,
    p_proj_s: &Vector2<f64>,
    p_proj_e: &Vector2<f64>,
    r_thre: f64,
) -> OverlapOutcome {
    let r = overlap_ratio(p_ori_s, p_ori_e, p_proj_s, p_proj_e);
    OverlapOutcome { passed: r.2 >= r_thre, r1: r.0, r2: r.1, r: r.2 }
}

/// `(r1, r2, r)` for the overlap of a projected segment onto an original one.
pub fn overlap_ratio(
    p_ori_s: &Vector2<f64>,
    p_ori_e: &Vector2<f64>,
    p_proj_s: &Vector2<f64>,
    p_proj_e: &Vector2<f64>,
) -> (f64, f64, f64) {
    let axis = p_ori_e - p_ori_s;
    let l_ori = axis.norm();
    let v_ori = axis / l_ori;
    let r1 = (p_proj_s - p_ori_s).dot(&v_ori) / l_ori;
    let r2 = (p_proj_e - p_ori_s).dot(&v_ori) / l_ori;
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    (r1, r2, hi.min(1.0) - lo.max(0.0))
}

/// One row of the gate audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub frame_id: u64,
    pub track_id: u64,
    pub gate: GateFailure,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Result of running all gates on one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MaplineVerdict {
    pub passed: bool,
    pub failures: Vec<GateFailure>,
    pub records: Vec<AuditRecord>,
}

/// Runs every gate for an observed segment against its projected mapline segment.
pub fn verify_mapline(
    frame_id: u64,
    track_id: u64,
    observed: &Segment2D,
    projected: &Segment2D,
    thresholds: &GateThresholds,
) -> MaplineVerdict {
    let proj_line: Vector3<f64> = projected.line();
    let d_s = point_line_distance(&proj_line, &observed.start);
    let d_e = point_line_distance(&proj_line, &observed.end);
    let ori_mid = observed.midpoint();
    let proj_mid = projected.midpoint();

    let rep = reprojection_gate(&ori_mid, &proj_mid, d_s, d_e, thresholds.theta_thre, thresholds.d_thre);
    let sens = sensitivity_gate(&projected.direction(), &ori_mid, &proj_mid, thresholds.alpha_thre);
    let ovl = overlap_gate(&observed.start, &observed.end, &projected.start, &projected.end, thresholds.r_thre);

    let record = |gate, value, threshold, passed| AuditRecord { frame_id, track_id, gate, value, threshold, passed };
    let records = vec![
        record(
            GateFailure::Midpoint,
            rep.midpoint_distance,
            thresholds.theta_thre,
            rep.midpoint_distance <= thresholds.theta_thre,
        ),
        record(
            GateFailure::Perpendicular,
            rep.perpendicular_distance,
            thresholds.d_thre,
            rep.perpendicular_distance <= thresholds.d_thre,
        ),
        record(GateFailure::Sensitivity, sens.alpha_deg, thresholds.alpha_thre, sens.passed),
        record(GateFailure::Overlap, ovl.r, thresholds.r_thre, ovl.passed),
    ];
    let failures: Vec<GateFailure> = records.iter().filter(|r| !r.passed).map(|r| r.gate).collect();
    MaplineVerdict { passed: failures.is_empty(), failures, records }
}

/// Writes audit rows as `frame_id,track_id,gate,value,threshold,verdict`.
pub fn write_audit_csv<W: std::io::Write>(records: &[AuditRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "frame_id,track_id,gate,value,threshold,verdict")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.frame_id,
            r.track_id,
            r.gate.as_str(),
            r.value,
            r.threshold,
            if r.passed { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    #[test]
    fn reprojection_cases() {
        let p = v(10.0, 10.0);
        assert!(reprojection_gate(&p, &p, 0.0, 0.0, 2.0, 3.0).passed());
        let out = reprojection_gate(&p, &v(13.0, 10.0), 0.0, 0.0, 2.0, 3.0);
        assert_eq!(out.failure, Some(GateFailure::Midpoint));
        assert_eq!(out.midpoint_distance, 3.0);
        let out = reprojection_gate(&p, &p, 1.0, 4.0, 2.0, 3.0);
        assert_eq!(out.failure, Some(GateFailure::Perpendicular));
        assert_eq!(out.perpendicular_distance, 4.0);
    }

    #[test]
    fn sensitivity_cases() {
        let along = v(1.0, 0.0);
        let mid = v(50.0, 50.0);
        let lateral = sensitivity_gate(&along, &mid, &v(50.0, 53.0), 10.0);
        assert!(lateral.passed);
        assert!((lateral.alpha_deg - 90.0).abs() < 1e-12);
        let sliding = sensitivity_gate(&along, &mid, &v(55.0, 50.0), 10.0);
        assert!(!sliding.passed);
        assert_eq!(sliding.alpha_deg, 0.0);
        assert!(sensitivity_gate(&along, &mid, &mid, 10.0).passed);
    }

    #[test]
    fn overlap_cases() {
        let o = overlap_gate(&v(0.0, 0.0), &v(10.0, 0.0), &v(0.0, 0.0), &v(10.0, 0.0), 1.0);
        assert_eq!((o.r1, o.r2, o.r), (0.0, 1.0, 1.0));
        assert!(o.passed);

        let o = overlap_gate(&v(0.0, 0.0), &v(10.0, 0.0), &v(5.0, 0.0), &v(15.0, 0.0), 0.3);
        assert_eq!((o.r1, o.r2, o.r), (0.5, 1.5, 0.5));
        assert!(o.passed);

        let o = overlap_gate(&v(0.0, 0.0), &v(10.0, 0.0), &v(12.0, 0.0), &v(20.0, 0.0), 0.3);
        assert_eq!((o.r1, o.r2), (1.2, 2.0));
        assert!((o.r + 0.2).abs() < 1e-15);
        assert!(!o.passed);
    }

    #[test]
    fn overlap_is_endpoint_order_free() {
        let a = overlap_ratio(&v(1.0, 2.0), &v(11.0, 5.0), &v(4.0, 3.0), &v(14.0, 7.0));
        let b = overlap_ratio(&v(11.0, 5.0), &v(1.0, 2.0), &v(14.0, 7.0), &v(4.0, 3.0));
        assert!((a.2 - b.2).abs() < 1e-12);
    }

    #[test]
    fn thresholds_validate() {
        assert!(GateThresholds::default().validate().is_ok());
        let bad = GateThresholds { r_thre: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn audit_csv_format() {
        let obs = Segment2D::new(0, v(0.0, 0.0), v(10.0, 0.0));
        let verdict = verify_mapline(3, 9, &obs, &obs, &GateThresholds::default());
        assert!(verdict.passed);
        let mut buf = Vec::new();
        write_audit_csv(&verdict.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "frame_id,track_id,gate,value,threshold,verdict");
        assert_eq!(lines[1], "3,9,midpoint,0,4,pass");
        assert_eq!(lines.len(), 5);
    }
}
