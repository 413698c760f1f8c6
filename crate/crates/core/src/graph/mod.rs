//! Robust point / line / vanishing-direction factor graph.

mod factors;
mod lm;
mod numeric;
mod robust;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

pub use factors::{
    gp_retract, line_residual, line_residual_jacobians, point_residual, point_residual_jacobians, sqrt_information,
    struct_residual, struct_residual_jacobians, tangent_basis, vd_align_residual, vd_align_residual_jacobians,
    TangentBasis,
};
pub use lm::{optimize, OptimizationReport, OptimizerOptions};
pub use numeric::numeric_jacobian;
pub use robust::{huber_cost, huber_weight, robustify, CHI2_95_1DOF, CHI2_95_2DOF};

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, OrthonormalLine, Pose};
use crate::vp::Segment2D;

/// Identifies one optimization variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum VarKey {
    Pose(u64),
    Point(u64),
    Line(u64),
    Gp(u64),
}

impl VarKey {
    /// Tangent dimension of the variable.
    pub fn dim(&self) -> usize {
        match self {
            VarKey::Pose(_) => 6,
            VarKey::Point(_) => 3,
            VarKey::Line(_) => 4,
            VarKey::Gp(_) => 2,
        }
    }

    /// Points and lines are eliminated by the Schur complement.
    pub fn is_landmark(&self) -> bool {
        matches!(self, VarKey::Point(_) | VarKey::Line(_))
    }
}

/// Current estimate of every variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub poses: BTreeMap<u64, Pose>,
    pub points: BTreeMap<u64, Vector3<f64>>,
    pub lines: BTreeMap<u64, OrthonormalLine>,
    /// Unit world directions.
    pub gps: BTreeMap<u64, Vector3<f64>>,
}

impl Values {
    pub fn contains(&self, key: &VarKey) -> bool {
        match *key {
            VarKey::Pose(i) => self.poses.contains_key(&i),
            VarKey::Point(i) => self.points.contains_key(&i),
            VarKey::Line(i) => self.lines.contains_key(&i),
            VarKey::Gp(i) => self.gps.contains_key(&i),
        }
    }

    pub fn keys(&self) -> Vec<VarKey> {
        let mut keys: Vec<VarKey> = self.poses.keys().map(|&i| VarKey::Pose(i)).collect();
        keys.extend(self.points.keys().map(|&i| VarKey::Point(i)));
        keys.extend(self.lines.keys().map(|&i| VarKey::Line(i)));
        keys.extend(self.gps.keys().map(|&i| VarKey::Gp(i)));
        keys
    }

    /// Applies the variable's retraction with tangent increment `delta`.
    pub fn retract(&mut self, key: &VarKey, delta: &[f64]) -> Result<()> {
        if delta.len() != key.dim() {
            return Err(Error::Config(format!("increment of length {} for {key:?}", delta.len())));
        }
        let missing = || Error::UnknownVariable(format!("{key:?}"));
        match *key {
            VarKey::Pose(i) => {
                let p = self.poses.get_mut(&i).ok_or_else(missing)?;
                *p = p.retract(&Vector6::from_column_slice(delta));
            }
            VarKey::Point(i) => {
                let p = self.points.get_mut(&i).ok_or_else(missing)?;
                *p += Vector3::from_column_slice(delta);
            }
            VarKey::Line(i) => {
                let l = self.lines.get_mut(&i).ok_or_else(missing)?;
                *l = l.update(&Vector4::from_column_slice(delta));
            }
            VarKey::Gp(i) => {
                let g = self.gps.get_mut(&i).ok_or_else(missing)?;
                *g = gp_retract(g, delta[0], delta[1]);
            }
        }
        Ok(())
    }

    fn pose(&self, id: u64) -> Result<&Pose> {
        self.poses.get(&id).ok_or_else(|| Error::UnknownVariable(format!("pose {id}")))
    }

    fn point(&self, id: u64) -> Result<&Vector3<f64>> {
        self.points.get(&id).ok_or_else(|| Error::UnknownVariable(format!("point {id}")))
    }

    fn line(&self, id: u64) -> Result<&OrthonormalLine> {
        self.lines.get(&id).ok_or_else(|| Error::UnknownVariable(format!("line {id}")))
    }

    fn gp(&self, id: u64) -> Result<&Vector3<f64>> {
        self.gps.get(&id).ok_or_else(|| Error::UnknownVariable(format!("gp {id}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFactor {
    pub pose: u64,
    pub point: u64,
    pub obs: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    /// Huber threshold on the whitened residual norm.
    pub huber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFactor {
    pub pose: u64,
    pub line: u64,
    pub obs: Segment2D,
    pub covariance: Matrix2<f64>,
    pub huber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VdAlignFactor {
    pub pose: u64,
    pub gp: u64,
    pub segment: Segment2D,
    pub sigma: f64,
    pub huber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructFactor {
    pub line: u64,
    pub gp: u64,
    pub sigma: f64,
    pub huber: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Point,
    Line,
    VdAlign,
    Struct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Factor {
    Point(PointFactor),
    Line(LineFactor),
    VdAlign(VdAlignFactor),
    Struct(StructFactor),
}

/// Whitened residual and per-variable Jacobian blocks.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub blocks: Vec<(VarKey, DMatrix<f64>)>,
}

fn whiten2(cov: &Matrix2<f64>, e: &Vector2<f64>) -> Result<(Matrix2<f64>, Vector2<f64>)> {
    let l = sqrt_information(cov)?;
    Ok((l, l * e))
}

impl Factor {
    pub fn kind(&self) -> FactorKind {
        match self {
            Factor::Point(_) => FactorKind::Point,
            Factor::Line(_) => FactorKind::Line,
            Factor::VdAlign(_) => FactorKind::VdAlign,
            Factor::Struct(_) => FactorKind::Struct,
        }
    }

    pub fn keys(&self) -> Vec<VarKey> {
        match self {
            Factor::Point(f) => vec![VarKey::Pose(f.pose), VarKey::Point(f.point)],
            Factor::Line(f) => vec![VarKey::Pose(f.pose), VarKey::Line(f.line)],
            Factor::VdAlign(f) => vec![VarKey::Pose(f.pose), VarKey::Gp(f.gp)],
            Factor::Struct(f) => vec![VarKey::Line(f.line), VarKey::Gp(f.gp)],
        }
    }

    pub fn huber(&self) -> Option<f64> {
        match self {
            Factor::Point(f) => f.huber,
            Factor::Line(f) => f.huber,
            Factor::VdAlign(f) => f.huber,
            Factor::Struct(f) => f.huber,
        }
    }

    /// Raw (unwhitened) residual.
    pub fn residual(&self, values: &Values, k: &CameraIntrinsics) -> Result<DVector<f64>> {
        Ok(match self {
            Factor::Point(f) => {
                let e = point_residual(values.point(f.point)?, values.pose(f.pose)?, k, &f.obs)?;
                DVector::from_column_slice(e.as_slice())
            }
            Factor::Line(f) => {
                let l = values.line(f.line)?.to_plucker();
                let e = line_residual(&l, values.pose(f.pose)?, k, &f.obs)?;
                DVector::from_column_slice(e.as_slice())
            }
            Factor::VdAlign(f) => {
                DVector::from_element(1, vd_align_residual(values.gp(f.gp)?, values.pose(f.pose)?, k, &f.segment))
            }
            Factor::Struct(f) => {
                let u = values.line(f.line)?.unit_direction();
                DVector::from_element(1, 1.0 - u.dot(values.gp(f.gp)?))
            }
        })
    }

    /// Residual whitened by the factor's square-root information.
    pub fn whitened_residual(&self, values: &Values, k: &CameraIntrinsics) -> Result<DVector<f64>> {
        let e = self.residual(values, k)?;
        Ok(match self {
            Factor::Point(PointFactor { covariance, .. }) | Factor::Line(LineFactor { covariance, .. }) => {
                let (_, w) = whiten2(covariance, &Vector2::new(e[0], e[1]))?;
                DVector::from_column_slice(w.as_slice())
            }
            Factor::VdAlign(VdAlignFactor { sigma, .. }) | Factor::Struct(StructFactor { sigma, .. }) => e / *sigma,
        })
    }

    /// Whitened Mahalanobis squared residual `eᵀ Σ⁻¹ e`.
    pub fn chi2(&self, values: &Values, k: &CameraIntrinsics) -> Result<f64> {
        Ok(self.whitened_residual(values, k)?.norm_squared())
    }

    /// Whitened residual and analytic Jacobians.
    pub fn linearize(&self, values: &Values, k: &CameraIntrinsics) -> Result<Linearization> {
        Ok(match self {
            Factor::Point(f) => {
                let (e, jp, jx) = point_residual_jacobians(values.point(f.point)?, values.pose(f.pose)?, k, &f.obs)?;
                let (l, w) = whiten2(&f.covariance, &e)?;
                Linearization {
                    residual: DVector::from_column_slice(w.as_slice()),
                    blocks: vec![
                        (VarKey::Pose(f.pose), DMatrix::from_column_slice(2, 6, (l * jp).as_slice())),
                        (VarKey::Point(f.point), DMatrix::from_column_slice(2, 3, (l * jx).as_slice())),
                    ],
                }
            }
            Factor::Line(f) => {
                let (e, jp, jl) = line_residual_jacobians(values.line(f.line)?, values.pose(f.pose)?, k, &f.obs)?;
                let (l, w) = whiten2(&f.covariance, &e)?;
                Linearization {
                    residual: DVector::from_column_slice(w.as_slice()),
                    blocks: vec![
                        (VarKey::Pose(f.pose), DMatrix::from_column_slice(2, 6, (l * jp).as_slice())),
                        (VarKey::Line(f.line), DMatrix::from_column_slice(2, 4, (l * jl).as_slice())),
                    ],
                }
            }
            Factor::VdAlign(f) => {
                let (e, jp, jg) = vd_align_residual_jacobians(values.gp(f.gp)?, values.pose(f.pose)?, k, &f.segment);
                let s = 1.0 / f.sigma;
                Linearization {
                    residual: DVector::from_element(1, e * s),
                    blocks: vec![
                        (VarKey::Pose(f.pose), DMatrix::from_row_slice(1, 6, (jp * s).as_slice())),
                        (VarKey::Gp(f.gp), DMatrix::from_row_slice(1, 2, (jg * s).as_slice())),
                    ],
                }
            }
            Factor::Struct(f) => {
                let (e, jl, jg) = struct_residual_jacobians(values.line(f.line)?, values.gp(f.gp)?);
                let s = 1.0 / f.sigma;
                Linearization {
                    residual: DVector::from_element(1, e * s),
                    blocks: vec![
                        (VarKey::Line(f.line), DMatrix::from_row_slice(1, 4, (jl * s).as_slice())),
                        (VarKey::Gp(f.gp), DMatrix::from_row_slice(1, 2, (jg * s).as_slice())),
                    ],
                }
            }
        })
    }

    fn validate(&self, values: &Values) -> Result<()> {
        for key in self.keys() {
            if !values.contains(&key) {
                return Err(Error::UnknownVariable(format!("{key:?}")));
            }
        }
        match self {
            Factor::Point(PointFactor { covariance, .. }) | Factor::Line(LineFactor { covariance, .. }) => {
                if (covariance - covariance.transpose()).abs().max() > 1e-12 * covariance.abs().max() {
                    return Err(Error::Config("covariance is not symmetric".into()));
                }
                sqrt_information(covariance)?;
            }
            Factor::VdAlign(VdAlignFactor { sigma, .. }) | Factor::Struct(StructFactor { sigma, .. }) => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
                }
            }
        }
        if let Some(h) = self.huber() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("huber threshold must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Robust cost per factor type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub point: f64,
    pub line: f64,
    pub vd_align: f64,
    #[serde(rename = "struct")]
    pub structure: f64,
    /// Factors skipped because their geometry was degenerate at this state.
    pub inactive: usize,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.point + self.line + self.vd_align + self.structure
    }

    fn add(&mut self, kind: FactorKind, cost: f64) {
        match kind {
            FactorKind::Point => self.point += cost,
            FactorKind::Line => self.line += cost,
            FactorKind::VdAlign => self.vd_align += cost,
            FactorKind::Struct => self.structure += cost,
        }
    }
}

/// Variables, camera and factors of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub intrinsics: CameraIntrinsics,
    pub values: Values,
    pub factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        Self { intrinsics, values: Values::default(), factors: Vec::new() }
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<()> {
        factor.validate(&self.values)?;
        self.factors.push(factor);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        for g in self.values.gps.values() {
            if (g.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("primitive direction {g:?} is not unit")));
            }
        }
        self.factors.iter().try_for_each(|f| f.validate(&self.values))
    }

    pub fn count(&self, kind: FactorKind) -> usize {
        self.factors.iter().filter(|f| f.kind() == kind).count()
    }

    /// Robust cost of every active factor at the given state.
    pub fn cost_at(&self, values: &Values) -> Result<CostBreakdown> {
        let mut out = CostBreakdown::default();
        for f in &self.factors {
            match f.whitened_residual(values, &self.intrinsics) {
                Ok(r) => out.add(f.kind(), robustify(r.norm_squared(), f.huber()).0),
                Err(Error::BehindCamera { .. } | Error::DegenerateLine) => out.inactive += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    pub fn cost_breakdown(&self) -> Result<CostBreakdown> {
        self.cost_at(&self.values)
    }
}

/// Sum over active factors of the robust Mahalanobis cost.
pub fn total_cost(graph: &FactorGraph) -> Result<f64> {
    Ok(graph.cost_breakdown()?.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn single_point_cost() {
        let mut g = FactorGraph::new(k());
        g.values.poses.insert(0, Pose::identity());
        g.values.points.insert(0, Vector3::new(1.0, 0.0, 2.0));
        let f = PointFactor {
            pose: 0,
            point: 0,
            obs: Vector2::new(560.0, 240.0),
            covariance: Matrix2::identity(),
            huber: None,
        };
        g.add_factor(Factor::Point(f.clone())).unwrap();
        assert!((total_cost(&g).unwrap() - 100.0).abs() < 1e-9);
        g.factors[0] = Factor::Point(PointFactor { huber: Some(5.0), ..f });
        assert!((total_cost(&g).unwrap() - 75.0).abs() < 1e-9);
    }

    #[test]
    fn factors_must_reference_variables() {
        let mut g = FactorGraph::new(k());
        g.values.poses.insert(0, Pose::identity());
        let f = Factor::Point(PointFactor {
            pose: 0,
            point: 3,
            obs: Vector2::zeros(),
            covariance: Matrix2::identity(),
            huber: None,
        });
        assert!(matches!(g.add_factor(f), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn rejects_bad_covariance() {
        let mut g = FactorGraph::new(k());
        g.values.poses.insert(0, Pose::identity());
        g.values.points.insert(0, Vector3::new(0.0, 0.0, 1.0));
        let f = Factor::Point(PointFactor {
            pose: 0,
            point: 0,
            obs: Vector2::zeros(),
            covariance: Matrix2::new(1.0, 2.0, 2.0, 1.0),
            huber: None,
        });
        assert!(g.add_factor(f).is_err());
    }

    #[test]
    fn behind_camera_is_inactive() {
        let mut g = FactorGraph::new(k());
        g.values.poses.insert(0, Pose::identity());
        g.values.points.insert(0, Vector3::new(0.0, 0.0, -1.0));
        g.add_factor(Factor::Point(PointFactor {
            pose: 0,
            point: 0,
            obs: Vector2::zeros(),
            covariance: Matrix2::identity(),
            huber: None,
        }))
        .unwrap();
        let c = g.cost_breakdown().unwrap();
        assert_eq!(c.inactive, 1);
        assert_eq!(c.total(), 0.0);
    }
}
