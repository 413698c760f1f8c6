use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// A detected image line segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment2D {
    pub id: u64,
    pub start: Vector2<f64>,
    pub end: Vector2<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_label: Option<usize>,
}

impl Segment2D {
    pub fn new(id: u64, start: Vector2<f64>, end: Vector2<f64>) -> Self {
        Self { id, start, end, track_id: None, cluster_label: None }
    }

    pub fn with_track(mut self, track_id: u64) -> Self {
        self.track_id = Some(track_id);
        self
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn midpoint(&self) -> Vector2<f64> {
        0.5 * (self.start + self.end)
    }

    /// Unit vector from start to end.
    pub fn direction(&self) -> Vector2<f64> {
        (self.end - self.start).normalize()
    }

    pub fn reversed(&self) -> Self {
        Self { start: self.end, end: self.start, ..self.clone() }
    }

    /// Homogeneous line through both endpoints with `||(a, b)|| = 1`.
    pub fn line(&self) -> Vector3<f64> {
        segment_line(self)
    }
}

/// Homogeneous line of a segment, normalized so that `||(a, b)|| = 1`.
pub fn segment_line(seg: &Segment2D) -> Vector3<f64> {
    let a = Vector3::new(seg.start.x, seg.start.y, 1.0);
    let b = Vector3::new(seg.end.x, seg.end.y, 1.0);
    let l = a.cross(&b);
    l / Vector2::new(l.x, l.y).norm()
}

/// Signed distance of a pixel to a normalized homogeneous line.
pub fn point_line_distance(l: &Vector3<f64>, p: &Vector2<f64>) -> f64 {
    l.dot(&Vector3::new(p.x, p.y, 1.0)) / Vector2::new(l.x, l.y).norm()
}
