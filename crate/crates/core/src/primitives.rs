//! World-frame Global Primitives: fused vanishing directions shared across frames.
//!
//! Each lifted direction either joins the closest parallel primitive, which is
//! then re-fused with weight `N / N_l`, or starts a new primitive. Primitives
//! are never merged with each other once created.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{canonicalize_sign, unsigned_angle_deg};

pub type FrameId = u64;
pub type GpId = u64;

/// Default fusion tolerance, degrees.
pub const DEFAULT_FUSE_TOL_DEG: f64 = 5.0;

/// Frames observing this primitive and the segments that voted for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub frame_id: FrameId,
    pub segment_ids: BTreeSet<u64>,
    /// `N_assoc / N_l` contributed by this association.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPrimitive {
    pub id: GpId,
    pub direction: Vector3<f64>,
    pub support_weight: f64,
    pub associations: Vec<Association>,
}

impl GlobalPrimitive {
    pub fn frames(&self) -> BTreeSet<FrameId> {
        self.associations.iter().filter(|a| !a.segment_ids.is_empty()).map(|a| a.frame_id).collect()
    }

    /// Support recomputed from the association list.
    pub fn recomputed_support(&self) -> f64 {
        self.associations.iter().map(|a| a.weight).sum()
    }
}

/// `arccos(|d1·d2|) < tol_deg`.
pub fn is_parallel(d1: &Vector3<f64>, d2: &Vector3<f64>, tol_deg: f64) -> bool {
    unsigned_angle_deg(d1, d2) < tol_deg
}

/// Support-weighted fusion of two parallel directions.
///
/// `d_j` is sign-aligned to `d_i`, the weighted sum `(N_i/N_l) d_i + (N_j/N_l) d_j`
/// is formed, then renormalized and sign-canonicalized.
pub fn fuse_directions(
    d_i: &Vector3<f64>,
    n_i: f64,
    d_j: &Vector3<f64>,
    n_j: f64,
    n_l: f64,
    tol_deg: f64,
) -> Result<Vector3<f64>> {
    let angle = unsigned_angle_deg(d_i, d_j);
    if angle >= tol_deg {
        return Err(Error::NotParallel { angle_deg: angle, tol_deg });
    }
    Ok(weighted_fusion(d_i, n_i / n_l, d_j, n_j / n_l))
}

fn weighted_fusion(d_i: &Vector3<f64>, w_i: f64, d_j: &Vector3<f64>, w_j: f64) -> Vector3<f64> {
    let aligned = if d_i.dot(d_j) < 0.0 { -d_j } else { *d_j };
    canonicalize_sign(&(d_i * w_i + aligned * w_j).normalize())
}

/// A direction lifted from one frame together with its supporting segments.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedDirection {
    pub direction: Vector3<f64>,
    pub segment_ids: BTreeSet<u64>,
}

/// Registry of Global Primitives; the single writer is [`GpRegistry::associate_frame`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GpRegistry {
    primitives: Vec<GlobalPrimitive>,
}

impl GpRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn primitives(&self) -> &[GlobalPrimitive] {
        &self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn get(&self, id: GpId) -> Option<&GlobalPrimitive> {
        self.primitives.iter().find(|g| g.id == id)
    }

    /// Fuses or appends every lifted direction of one frame.
    ///
    /// Returns the primitive each lifted direction was assigned to, in input order.
    pub fn associate_frame(
        &mut self,
        frame_id: FrameId,
        lifted: &[LiftedDirection],
        n_l: usize,
        fuse_tol_deg: f64,
    ) -> Vec<(GpId, BTreeSet<u64>)> {
        let n_l = n_l.max(1) as f64;
        let mut out = Vec::with_capacity(lifted.len());
        for ld in lifted {
            let weight = ld.segment_ids.len() as f64 / n_l;
            let direction = canonicalize_sign(&ld.direction.normalize());
            let best = self
                .primitives
                .iter()
                .enumerate()
                .map(|(i, g)| (i, unsigned_angle_deg(&g.direction, &direction)))
                .filter(|&(_, a)| a < fuse_tol_deg)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let association = Association { frame_id, segment_ids: ld.segment_ids.clone(), weight };
            let id = match best {
                Some((i, _)) => {
                    let gp = &mut self.primitives[i];
                    gp.direction = weighted_fusion(&gp.direction, gp.support_weight, &direction, weight);
                    gp.support_weight += weight;
                    gp.associations.push(association);
                    gp.id
                }
                None => {
                    let id = self.primitives.len() as GpId;
                    self.primitives.push(GlobalPrimitive {
                        id,
                        direction,
                        support_weight: weight,
                        associations: vec![association],
                    });
                    id
                }
            };
            out.push((id, ld.segment_ids.clone()));
        }
        out
    }

    /// Overwrites primitive directions, e.g. after optimization.
    pub fn set_direction(&mut self, id: GpId, direction: Vector3<f64>) {
        if let Some(g) = self.primitives.iter_mut().find(|g| g.id == id) {
            g.direction = canonicalize_sign(&direction.normalize());
        }
    }

    /// Debug dump: `[{gp_id, direction, support, frames}]`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.primitives
                .iter()
                .map(|g| {
                    serde_json::json!({
                        "gp_id": g.id,
                        "direction": [g.direction.x, g.direction.y, g.direction.z],
                        "support": g.support_weight,
                        "frames": g.frames().into_iter().collect::<Vec<_>>(),
                    })
                })
                .collect(),
        )
    }
}

/// Frames linked through a shared primitive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GpAssociationGraph {
    pub nodes: BTreeSet<FrameId>,
    /// `(frame_a, frame_b, gp_id)` with `frame_a < frame_b`.
    pub edges: BTreeSet<(FrameId, FrameId, GpId)>,
}

impl GpAssociationGraph {
    /// Whether `a` and `b` are connected by any primitive (order-free).
    pub fn connects(&self, a: FrameId, b: FrameId) -> bool {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.edges.iter().any(|&(x, y, _)| x == a && y == b)
    }
}

/// Complete graph per primitive over its associated frames.
pub fn build_association_graph(registry: &GpRegistry) -> GpAssociationGraph {
    let mut graph = GpAssociationGraph::default();
    for gp in registry.primitives() {
        let frames: Vec<FrameId> = gp.frames().into_iter().collect();
        graph.nodes.extend(frames.iter().copied());
        for (i, &a) in frames.iter().enumerate() {
            for &b in &frames[i + 1..] {
                graph.edges.insert((a, b, gp.id));
            }
        }
    }
    graph
}
