//! Vanishing point detection from image segments and lifting to world directions.
//!
//! Detection runs J-Linkage over random pair hypotheses: each segment keeps the
//! set of hypotheses it agrees with, and clusters are merged greedily by the
//! Jaccard distance of those preference sets.

mod jlinkage;
mod segment;

pub use jlinkage::{consensus, jlinkage_cluster, sample_vp_hypotheses, PreferenceSet};
pub use segment::{point_line_distance, segment_line, Segment2D};

use nalgebra::{DMatrix, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{canonicalize_sign, CameraIntrinsics};

/// Homogeneous weight below which a vanishing point is treated as lying at infinity.
pub const INFINITY_EPS: f64 = 1e-9;
/// Endpoint distances below this are never trimmed from a cluster, pixels.
pub const TRIM_FLOOR_PX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VpParams {
    /// Number of random pair hypotheses.
    pub hypotheses: usize,
    /// Consensus threshold, degrees.
    pub consensus_deg: f64,
    pub min_cluster_size: usize,
}

impl Default for VpParams {
    fn default() -> Self {
        Self { hypotheses: 500, consensus_deg: 2.0, min_cluster_size: 3 }
    }
}

/// A refined vanishing point and the segments that support it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingPointEstimate {
    /// Spherically normalized homogeneous image point.
    pub vp: Vector3<f64>,
    pub member_segment_ids: Vec<u64>,
    /// RMS consensus angle of the members, degrees.
    pub residual_rms: f64,
}

/// Least-squares vanishing point of a cluster: the right singular vector of the
/// stacked normalized lines with the smallest singular value.
///
/// Endpoints are first centered and scaled to unit mean distance so the
/// homogeneous coordinates are balanced; in raw pixels the fit favors distant
/// points.
pub fn refine_vp(segments: &[Segment2D]) -> Result<VanishingPointEstimate> {
    if segments.len() < 2 {
        return Err(Error::TooFewSegments(segments.len()));
    }
    let n = 2.0 * segments.len() as f64;
    let center = segments.iter().map(|s| s.start + s.end).sum::<Vector2<f64>>() / n;
    let spread = segments.iter().map(|s| (s.start - center).norm() + (s.end - center).norm()).sum::<f64>() / n;
    let scale = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let rows = segments.len().max(3);
    let mut a = DMatrix::<f64>::zeros(rows, 3);
    for (i, s) in segments.iter().enumerate() {
        let c = Segment2D::new(s.id, (s.start - center) * scale, (s.end - center) * scale);
        a.set_row(i, &c.line().transpose());
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let (s1, s2) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
    if s1 == 0.0 || s2 <= 1e-9 * s1 {
        return Err(Error::RankDeficient);
    }
    let row = v_t.row(order[2]);
    // undo the conditioning: x = x' / scale + center
    let vc = Vector3::new(row[0], row[1], row[2]);
    let mut vp = Vector3::new(vc.x / scale + center.x * vc.z, vc.y / scale + center.y * vc.z, vc.z).normalize();
    if vp.z < 0.0 || (vp.z == 0.0 && canonicalize_sign(&vp) != vp) {
        vp = -vp;
    }
    let mut sq = 0.0;
    for s in segments {
        let angle = consensus(s, &vp).unwrap_or(0.0);
        sq += angle * angle;
    }
    let mut ids: Vec<u64> = segments.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    Ok(VanishingPointEstimate { vp, member_segment_ids: ids, residual_rms: (sq / segments.len() as f64).sqrt() })
}

/// World-frame vanishing direction `normalize(R_wc · normalize(K⁻¹ v))`, sign-canonical.
pub fn lift_vanishing_point(vp: &Vector3<f64>, k: &CameraIntrinsics, rotation_wc: &Rotation3<f64>) -> Vector3<f64> {
    let ray = (k.inverse_matrix() * vp).normalize();
    canonicalize_sign(&(rotation_wc * ray).normalize())
}

/// Camera-frame direction of a vanishing point (the lifting with `R_wc = I`).
pub fn vp_to_camera_direction(vp: &Vector3<f64>, k: &CameraIntrinsics) -> Vector3<f64> {
    lift_vanishing_point(vp, k, &Rotation3::identity())
}

/// Full per-frame detection: hypotheses, clustering and robust refinement.
///
/// Members trimmed during refinement are left unassigned; a cluster that falls
/// below `min_cluster_size` is dropped.
///
/// Returned estimates are ordered by decreasing support, then by smallest member id.
pub fn detect_vanishing_points(
    segments: &[Segment2D],
    params: &VpParams,
    seed: u64,
) -> Result<Vec<VanishingPointEstimate>> {
    let hypotheses = sample_vp_hypotheses(segments, params.hypotheses, seed)?;
    let clusters = jlinkage_cluster(segments, &hypotheses, params.consensus_deg, params.min_cluster_size);
    let mut out = Vec::with_capacity(clusters.len());
    for ids in clusters {
        let mut members: Vec<Segment2D> =
            segments.iter().filter(|s| ids.binary_search(&s.id).is_ok()).cloned().collect();
        // id order keeps the fit bit-identical under input permutation
        members.sort_by_key(|s| s.id);
        match refine_vp_trimmed(&members, TRIM_FLOOR_PX) {
            Ok(est) if est.member_segment_ids.len() < params.min_cluster_size.max(2) => continue,
            Ok(est) => out.push(est),
            Err(Error::RankDeficient) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Re-fits a cluster after trimming members whose endpoint distance from the
/// ray through their midpoint and the vanishing point exceeds three robust
/// standard deviations (`1.4826 · median`), repeated until stable.
///
/// A segment from another family whose line happens to pass near the vanishing
/// point survives J-Linkage but biases the least-squares fit; trimming removes it.
/// Distances below `floor_px` are never trimmed.
pub fn refine_vp_trimmed(segments: &[Segment2D], floor_px: f64) -> Result<VanishingPointEstimate> {
    let mut members: Vec<Segment2D> = segments.to_vec();
    let mut est = refine_vp(&members)?;
    for _ in 0..5 {
        let dist: Vec<f64> = members
            .iter()
            .map(|s| 0.5 * s.length() * consensus(s, &est.vp).unwrap_or(0.0).to_radians().sin())
            .collect();
        let mut sorted = dist.clone();
        sorted.sort_by(f64::total_cmp);
        let cutoff = (3.0 * 1.4826 * sorted[sorted.len() / 2]).max(floor_px);
        let kept: Vec<Segment2D> =
            members.iter().zip(&dist).filter(|(_, a)| **a <= cutoff).map(|(s, _)| s.clone()).collect();
        if kept.len() == members.len() || kept.len() < 2 {
            break;
        }
        members = kept;
        est = refine_vp(&members)?;
    }
    Ok(est)
}

/// Parses `id x1 y1 x2 y2 [track_id]` records, one per line. Blank lines and `#` comments are skipped.
pub fn parse_segment_list(text: &str) -> Result<Vec<Segment2D>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(Error::Parse { line: i + 1, msg: format!("expected 5 or 6 fields, found {}", fields.len()) });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: format!("{s:?}: {e}") })
        };
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>().map_err(|e| Error::Parse { line: i + 1, msg: format!("{s:?}: {e}") })
        };
        let mut seg = Segment2D::new(
            int(fields[0])?,
            nalgebra::Vector2::new(num(fields[1])?, num(fields[2])?),
            nalgebra::Vector2::new(num(fields[3])?, num(fields[4])?),
        );
        if seg.length() <= 0.0 {
            return Err(Error::Parse { line: i + 1, msg: "zero-length segment".into() });
        }
        if fields.len() == 6 {
            seg.track_id = Some(int(fields[5])?);
        }
        out.push(seg);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector3};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
    }

    fn through(id: u64, p: Vector2<f64>, angle_deg: f64, offset: f64, len: f64) -> Segment2D {
        let d = Vector2::new(angle_deg.to_radians().cos(), angle_deg.to_radians().sin());
        let a = p + d * offset;
        Segment2D::new(id, a, a + d * len)
    }

    #[test]
    fn two_segments_meeting_at_principal_point() {
        let p = Vector2::new(320.0, 240.0);
        let segs = vec![through(0, p, 10.0, 50.0, 100.0), through(1, p, 75.0, 30.0, 80.0)];
        let est = refine_vp(&segs).unwrap();
        let expected = Vector3::new(320.0, 240.0, 1.0).normalize();
        assert!((est.vp - expected).norm() < 1e-9);
    }

    #[test]
    fn planted_vp_is_recovered() {
        let p = Vector2::new(1500.0, -300.0);
        let segs: Vec<_> =
            (0..20).map(|i| through(i, p, 150.0 + i as f64 * 2.5, 400.0 + 20.0 * i as f64, 60.0 + i as f64)).collect();
        let est = refine_vp(&segs).unwrap();
        let expected = Vector3::new(p.x, p.y, 1.0).normalize();
        assert!((est.vp - expected).norm() < 1e-7);
        for s in &segs {
            assert!(consensus(s, &est.vp).unwrap() < 1e-6);
        }
        assert!(est.residual_rms < 1e-6);
    }

    #[test]
    fn trimming_drops_a_stray_member() {
        let p = Vector2::new(900.0, 200.0);
        let mut segs: Vec<_> =
            (0..15).map(|i| through(i, p, 170.0 + i as f64 * 1.5, 300.0 + 10.0 * i as f64, 80.0)).collect();
        // passes 1.5 degrees off the vanishing point
        segs.push(through(99, p + Vector2::new(0.0, 15.0), 178.0, 400.0, 80.0));
        let plain = refine_vp(&segs).unwrap();
        let trimmed = refine_vp_trimmed(&segs, TRIM_FLOOR_PX).unwrap();
        let expected = Vector3::new(p.x, p.y, 1.0).normalize();
        assert!((plain.vp - expected).norm() > 1e-6);
        assert!((trimmed.vp - expected).norm() < 1e-9);
        assert!(!trimmed.member_segment_ids.contains(&99));
        assert_eq!(trimmed.member_segment_ids.len(), 15);
    }

    #[test]
    fn collinear_cluster_is_rank_deficient() {
        let segs = vec![
            Segment2D::new(0, Vector2::new(0.0, 0.0), Vector2::new(10.0, 10.0)),
            Segment2D::new(1, Vector2::new(20.0, 20.0), Vector2::new(40.0, 40.0)),
            Segment2D::new(2, Vector2::new(-5.0, -5.0), Vector2::new(-1.0, -1.0)),
        ];
        assert!(matches!(refine_vp(&segs), Err(Error::RankDeficient)));
    }

    #[test]
    fn lift_principal_point() {
        let d = lift_vanishing_point(&Vector3::new(320.0, 240.0, 1.0), &k(), &Rotation3::identity());
        assert!((d - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn lift_off_axis_vp() {
        let vp = Vector3::new(820.0, 240.0, 1.0).normalize();
        let d = lift_vanishing_point(&vp, &k(), &Rotation3::identity());
        let expected = Vector3::new(1.0, 0.0, 1.0).normalize();
        assert!((d - expected).norm() < 1e-12);

        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        let rotated = lift_vanishing_point(&vp, &k(), &r);
        let expected = canonicalize_sign(&(r * expected));
        assert!((rotated - expected).norm() < 1e-12);
        assert!((rotated.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lift_is_sign_free() {
        let vp = Vector3::new(-120.0, 900.0, 0.3).normalize();
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.0);
        let a = lift_vanishing_point(&vp, &k(), &r);
        let b = lift_vanishing_point(&(-vp), &k(), &r);
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn parses_segment_lists() {
        let text = "# id x1 y1 x2 y2 track\n1 0 0 10 0\n2 5 0 5 10 7\n\n";
        let segs = parse_segment_list(text).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].track_id, Some(7));
        let err = parse_segment_list("1 0 0 10\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
