//! Trajectory I/O, similarity alignment and absolute trajectory error.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose;

/// Largest accepted deviation of a loaded quaternion from unit norm.
pub const QUATERNION_TOL: f64 = 1e-3;

/// Timestamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    entries: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(f64, Pose)>) -> Result<Self> {
        for (i, w) in entries.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(Error::NonMonotonicTimestamps { line: i + 2 });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, Pose)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.entries.iter().map(|(_, p)| p.center()).collect()
    }
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines (camera-in-world).
pub fn parse_tum(text: &str) -> Result<Trajectory> {
    let mut entries: Vec<(f64, Pose)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::Parse { line: lineno, msg: format!("expected 8 fields, found {}", fields.len()) });
        }
        let mut v = [0.0; 8];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| Error::Parse { line: lineno, msg: format!("invalid number {f:?}") })?;
        }
        let q: Quaternion<f64> = Quaternion::new(v[7], v[4], v[5], v[6]);
        if (q.norm() - 1.0).abs() > QUATERNION_TOL {
            return Err(Error::Parse { line: lineno, msg: format!("quaternion norm {} is not unit", q.norm()) });
        }
        let r_wc = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        let pose = Pose::from_camera_in_world(r_wc, Vector3::new(v[1], v[2], v[3]));
        if entries.last().is_some_and(|(t, _)| *t >= v[0]) {
            return Err(Error::NonMonotonicTimestamps { line: lineno });
        }
        entries.push((v[0], pose));
    }
    Ok(Trajectory { entries })
}

pub fn format_tum(traj: &Trajectory) -> String {
    let mut out = String::new();
    for (t, pose) in &traj.entries {
        let c = pose.center();
        let q = UnitQuaternion::from_rotation_matrix(&pose.rotation_wc());
        out.push_str(&format!("{} {} {} {} {} {} {} {}\n", t, c.x, c.y, c.z, q.i, q.j, q.k, q.w));
    }
    out
}

pub fn load_tum(path: &Path) -> Result<Trajectory> {
    parse_tum(&std::fs::read_to_string(path)?)
}

pub fn save_tum(traj: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, format_tum(traj))?;
    Ok(())
}

/// Similarity `p ↦ s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Position pairs `(est, ref)` at timestamps present in both trajectories.
pub fn associate(est: &Trajectory, reference: &Trajectory) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let by_time: BTreeMap<u64, Vector3<f64>> =
        reference.entries.iter().map(|(t, p)| (t.to_bits(), p.center())).collect();
    est.entries.iter().filter_map(|(t, p)| by_time.get(&t.to_bits()).map(|r| (p.center(), *r))).collect()
}

/// Closed-form least-squares alignment of point pairs `(x, y)`: minimizes
/// `Σ |s R x + t − y|²`, with `s = 1` unless `with_scale`.
pub fn umeyama_points(pairs: &[(Vector3<f64>, Vector3<f64>)], with_scale: bool) -> Result<Similarity> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InsufficientPairs(n));
    }
    let nf = n as f64;
    let mu_x = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / nf;
    let mu_y = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in pairs {
        cov += (y - mu_y) * (x - mu_x).transpose();
        var_x += (x - mu_x).norm_squared();
    }
    cov /= nf;
    var_x /= nf;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-10 * sv[0] {
        return Err(Error::DegenerateGeometry);
    }
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip along the smallest singular direction; svd output is unsorted
        let (imin, _) = svd.singular_values.argmin();
        s[(imin, imin)] = -1.0;
    }
    let r = u * s * v_t;
    let scale = if with_scale { (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_x } else { 1.0 };
    Ok(Similarity { scale, rotation: Rotation3::from_matrix_unchecked(r), translation: mu_y - scale * (r * mu_x) })
}

/// Alignment mapping `est` positions onto `reference`.
pub fn umeyama_align(est: &Trajectory, reference: &Trajectory, with_scale: bool) -> Result<Similarity> {
    umeyama_points(&associate(est, reference), with_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Compare positions as they are.
    None,
    /// Rotation and translation.
    Rigid,
    /// Rotation, translation and scale.
    Similarity,
}

/// RMSE of associated positions after the chosen alignment.
pub fn ate_rmse_with(est: &Trajectory, reference: &Trajectory, alignment: Alignment) -> Result<f64> {
    let pairs = associate(est, reference);
    let sim = match alignment {
        Alignment::None => {
            if pairs.is_empty() {
                return Err(Error::InsufficientPairs(0));
            }
            Similarity::identity()
        }
        Alignment::Rigid => umeyama_points(&pairs, false)?,
        Alignment::Similarity => umeyama_points(&pairs, true)?,
    };
    let sq: f64 = pairs.iter().map(|(x, y)| (sim.apply(x) - y).norm_squared()).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// ATE RMSE in meters; monocular evaluation uses `with_scale = true`.
pub fn ate_rmse(est: &Trajectory, reference: &Trajectory, with_scale: bool) -> Result<f64> {
    ate_rmse_with(est, reference, if with_scale { Alignment::Similarity } else { Alignment::Rigid })
}
