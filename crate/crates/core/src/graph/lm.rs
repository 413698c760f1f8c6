//! Levenberg–Marquardt with Schur elimination of point and line landmarks.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{robustify, CostBreakdown, FactorGraph, Values, VarKey};
use crate::error::{Error, Result};

/// Smallest diagonal entry used for Marquardt scaling.
const DIAG_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub lambda_init: f64,
    /// Factor applied to λ on rejection and removed on acceptance.
    pub lambda_scale: f64,
    /// λ beyond which no descent is deemed possible.
    pub lambda_max: f64,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub rel_tol: f64,
    /// Stop when the largest gradient entry falls below this.
    pub abs_tol: f64,
    pub fixed_variable_keys: BTreeSet<VarKey>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lambda_init: 1e-4,
            lambda_scale: 10.0,
            lambda_max: 1e16,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            fixed_variable_keys: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Number of linearizations that produced a linear solve.
    pub iters: usize,
    pub converged: bool,
    pub per_factor_type_cost_breakdown: CostBreakdown,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

struct Landmark {
    dim: usize,
    h: DMatrix<f64>,
    b: DVector<f64>,
    /// Coupling blocks `H_{r,l}` keyed by reduced-variable index.
    cross: BTreeMap<usize, DMatrix<f64>>,
}

struct Layout {
    reduced: BTreeMap<VarKey, (usize, usize)>,
    reduced_keys: Vec<VarKey>,
    reduced_dim: usize,
    landmarks: BTreeMap<VarKey, usize>,
    landmark_keys: Vec<VarKey>,
}

impl Layout {
    fn new(graph: &FactorGraph, fixed: &BTreeSet<VarKey>) -> Self {
        let touched: BTreeSet<VarKey> =
            graph.factors.iter().flat_map(|f| f.keys()).filter(|k| !fixed.contains(k)).collect();
        let mut reduced = BTreeMap::new();
        let mut reduced_keys = Vec::new();
        let mut landmarks = BTreeMap::new();
        let mut landmark_keys = Vec::new();
        let mut offset = 0;
        for key in touched {
            if key.is_landmark() {
                landmarks.insert(key, landmark_keys.len());
                landmark_keys.push(key);
            } else {
                reduced.insert(key, (reduced_keys.len(), offset));
                reduced_keys.push(key);
                offset += key.dim();
            }
        }
        Self { reduced, reduced_keys, reduced_dim: offset, landmarks, landmark_keys }
    }
}

struct Normal {
    h: DMatrix<f64>,
    b: DVector<f64>,
    landmarks: Vec<Landmark>,
}

impl Normal {
    fn gradient_max(&self) -> f64 {
        let r = self.b.amax();
        self.landmarks.iter().map(|l| l.b.amax()).fold(r, f64::max)
    }
}

fn build_normal(graph: &FactorGraph, values: &Values, layout: &Layout) -> Result<Normal> {
    let n = layout.reduced_dim;
    let mut h = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut landmarks: Vec<Landmark> = layout
        .landmark_keys
        .iter()
        .map(|k| Landmark {
            dim: k.dim(),
            h: DMatrix::zeros(k.dim(), k.dim()),
            b: DVector::zeros(k.dim()),
            cross: BTreeMap::new(),
        })
        .collect();

    for factor in &graph.factors {
        let lin = match factor.linearize(values, &graph.intrinsics) {
            Ok(l) => l,
            Err(Error::BehindCamera { .. } | Error::DegenerateLine) => continue,
            Err(e) => return Err(e),
        };
        let (_, w) = robustify(lin.residual.norm_squared(), factor.huber());
        let r = &lin.residual;
        let active: Vec<&(VarKey, DMatrix<f64>)> = lin
            .blocks
            .iter()
            .filter(|(k, _)| layout.reduced.contains_key(k) || layout.landmarks.contains_key(k))
            .collect();
        for (ka, ja) in &active {
            let g = ja.transpose() * r * w;
            if let Some(&(_, oa)) = layout.reduced.get(ka) {
                let mut seg = b.rows_mut(oa, ka.dim());
                seg += &g;
            } else {
                landmarks[layout.landmarks[ka]].b += &g;
            }
            for (kb, jb) in &active {
                let block = ja.transpose() * jb * w;
                match (layout.reduced.get(ka), layout.reduced.get(kb)) {
                    (Some(&(_, oa)), Some(&(_, ob))) => {
                        let mut v = h.view_mut((oa, ob), (ka.dim(), kb.dim()));
                        v += &block;
                    }
                    (None, None) => {
                        // factors never connect two landmarks
                        debug_assert_eq!(ka, kb);
                        landmarks[layout.landmarks[ka]].h += &block;
                    }
                    (Some(&(ia, _)), None) => {
                        let lm = &mut landmarks[layout.landmarks[kb]];
                        let dim = lm.dim;
                        let entry = lm.cross.entry(ia).or_insert_with(|| DMatrix::zeros(ka.dim(), dim));
                        *entry += &block;
                    }
                    (None, Some(_)) => {}
                }
            }
        }
    }
    Ok(Normal { h, b, landmarks })
}

fn damped(h: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut out = h.clone();
    for i in 0..h.nrows() {
        out[(i, i)] += lambda * h[(i, i)].max(DIAG_FLOOR);
    }
    out
}

/// Solves the damped system; `None` when a block is not positive definite.
fn solve(normal: &Normal, layout: &Layout, lambda: f64) -> Option<(DVector<f64>, Vec<DVector<f64>>)> {
    let mut s = damped(&normal.h, lambda);
    let mut g = normal.b.clone();
    let mut inverses = Vec::with_capacity(normal.landmarks.len());
    for lm in &normal.landmarks {
        let inv = Cholesky::new(damped(&lm.h, lambda))?.inverse();
        let terms: Vec<(usize, usize, DMatrix<f64>, &DMatrix<f64>)> = lm
            .cross
            .iter()
            .map(|(&i, bi)| {
                let (_, off) = layout.reduced[&layout.reduced_keys[i]];
                (i, off, bi * &inv, bi)
            })
            .collect();
        for (ia, oa, ta, _) in &terms {
            let da = layout.reduced_keys[*ia].dim();
            let mut gs = g.rows_mut(*oa, da);
            gs -= ta * &lm.b;
            for (ib, ob, _, bb) in &terms {
                let db = layout.reduced_keys[*ib].dim();
                let mut v = s.view_mut((*oa, *ob), (da, db));
                v -= ta * bb.transpose();
            }
        }
        inverses.push(inv);
    }
    let dx = if layout.reduced_dim > 0 { -Cholesky::new(s)?.solve(&g) } else { DVector::zeros(0) };
    let mut dl = Vec::with_capacity(normal.landmarks.len());
    for (lm, inv) in normal.landmarks.iter().zip(&inverses) {
        let mut rhs = -lm.b.clone();
        for (&i, bi) in &lm.cross {
            let (_, off) = layout.reduced[&layout.reduced_keys[i]];
            rhs -= bi.transpose() * dx.rows(off, layout.reduced_keys[i].dim());
        }
        dl.push(inv * rhs);
    }
    Some((dx, dl))
}

fn apply(values: &Values, layout: &Layout, dx: &DVector<f64>, dl: &[DVector<f64>]) -> Result<Values> {
    let mut out = values.clone();
    for (key, &(_, off)) in &layout.reduced {
        out.retract(key, dx.rows(off, key.dim()).as_slice())?;
    }
    for (key, d) in layout.landmark_keys.iter().zip(dl) {
        out.retract(key, d.as_slice())?;
    }
    for p in out.poses.values_mut() {
        *p = p.renormalized();
    }
    Ok(out)
}

/// Minimizes the robust cost in place.
///
/// The gauge must be fixed: either a pose is held fixed, or every point is
/// (known structure, as in resection). Factors whose
/// geometry is degenerate at the current state (point behind the camera,
/// line projecting to a point) are skipped for that iteration; a step is only
/// accepted if it lowers the cost without deactivating more factors.
pub fn optimize(graph: &mut FactorGraph, options: &OptimizerOptions) -> Result<OptimizationReport> {
    graph.validate()?;
    let fixed = &options.fixed_variable_keys;
    let has_fixed_pose = fixed.iter().any(|k| matches!(k, VarKey::Pose(_)) && graph.values.contains(k));
    let known_structure =
        !graph.values.points.is_empty() && graph.values.points.keys().all(|&i| fixed.contains(&VarKey::Point(i)));
    if !graph.values.poses.is_empty() && !has_fixed_pose && !known_structure {
        return Err(Error::GaugeUnfixed);
    }
    let layout = Layout::new(graph, &options.fixed_variable_keys);

    let mut cost = graph.cost_breakdown()?;
    let initial_cost = cost.total();
    let mut history = vec![initial_cost];
    let mut lambda = options.lambda_init;
    let mut iters = 0;
    let mut converged = false;

    while iters < options.max_iters {
        let normal = build_normal(graph, &graph.values, &layout)?;
        if normal.gradient_max() < options.abs_tol {
            converged = true;
            break;
        }
        iters += 1;
        let mut accepted = None;
        while lambda <= options.lambda_max {
            if let Some((dx, dl)) = solve(&normal, &layout, lambda) {
                let candidate = apply(&graph.values, &layout, &dx, &dl)?;
                let c = graph.cost_at(&candidate)?;
                if c.total() < cost.total() && c.inactive <= cost.inactive {
                    accepted = Some((candidate, c));
                    lambda = (lambda / options.lambda_scale).max(1e-12);
                    break;
                }
            }
            lambda *= options.lambda_scale;
        }
        let Some((candidate, c)) = accepted else {
            // no damping yields descent: stationary to numerical precision
            converged = true;
            break;
        };
        debug_assert!(candidate.gps.values().all(|g| (g.norm() - 1.0).abs() < 1e-12));
        let previous = cost.total();
        graph.values = candidate;
        cost = c;
        history.push(cost.total());
        log::debug!("lm iter {iters}: cost {:.6e} lambda {:.1e}", cost.total(), lambda);
        if (previous - cost.total()) <= options.rel_tol * previous {
            converged = true;
            break;
        }
    }

    Ok(OptimizationReport {
        initial_cost,
        final_cost: cost.total(),
        iters,
        converged,
        per_factor_type_cost_breakdown: cost,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{CameraIntrinsics, Pose};
    use crate::graph::{Factor, PointFactor};
    use nalgebra::{Matrix2, Vector3, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn resection(perturb: &Vector6<f64>, seed: u64) -> (FactorGraph, Pose) {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let truth = Pose::exp(&Vector6::new(0.1, -0.2, 0.3, 0.05, -0.1, 0.02));
        let mut g = FactorGraph::new(k);
        g.values.poses.insert(0, truth.retract(perturb));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = truth.inverse();
        for i in 0..50 {
            let pc = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(2.0..6.0));
            let pw = inv.transform_point(&pc);
            g.values.points.insert(i, pw);
            g.add_factor(Factor::Point(PointFactor {
                pose: 0,
                point: i,
                obs: k.project(&pc).unwrap(),
                covariance: Matrix2::identity(),
                huber: None,
            }))
            .unwrap();
        }
        (g, truth)
    }

    fn fix_points(g: &FactorGraph) -> OptimizerOptions {
        OptimizerOptions {
            fixed_variable_keys: g.values.points.keys().map(|&i| VarKey::Point(i)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn stationary_at_ground_truth() {
        let (mut g, truth) = resection(&Vector6::zeros(), 1);
        let opts = fix_points(&g);
        let report = optimize(&mut g, &opts).unwrap();
        assert!(report.converged);
        assert!(report.iters <= 2);
        assert!(report.final_cost < 1e-12);
        assert!((g.values.poses[&0].log() - truth.log()).norm() < 1e-12);
    }

    #[test]
    fn recovers_perturbed_pose() {
        let d = 1f64.to_radians();
        let (mut g, truth) = resection(&Vector6::new(0.05, -0.05, 0.05, d, -d, d), 2);
        let opts = fix_points(&g);
        let report = optimize(&mut g, &opts).unwrap();
        assert!(report.converged);
        let est = g.values.poses[&0];
        assert!(est.rotation_angle_to(&truth) < 1e-6);
        assert!((est.center() - truth.center()).norm() < 1e-6);
        for w in report.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn gauge_must_be_fixed() {
        let (mut g, _) = resection(&Vector6::zeros(), 3);
        assert!(matches!(optimize(&mut g, &OptimizerOptions::default()), Err(Error::GaugeUnfixed)));
    }

    #[test]
    fn huge_damping_barely_moves() {
        let (g, _) = resection(&Vector6::new(0.05, 0.0, 0.0, 0.01, 0.0, 0.0), 4);
        let layout = Layout::new(&g, &fix_points(&g).fixed_variable_keys);
        let normal = build_normal(&g, &g.values, &layout).unwrap();
        let (small, _) = solve(&normal, &layout, 1e-4).unwrap();
        let (tiny, _) = solve(&normal, &layout, 1e12).unwrap();
        assert!(tiny.norm() < 1e-9 * small.norm().max(1.0));
    }
}
