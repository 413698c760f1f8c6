use thiserror::Error;

/// Errors raised by the geometry, detection, optimization and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },
    #[error("degenerate line: image projection is a point or lies at infinity")]
    DegenerateLine,
    #[error("insufficient parallax for triangulation")]
    InsufficientParallax,
    #[error("too few segments: need at least 2, got {0}")]
    TooFewSegments(usize),
    #[error("vanishing point coincides with the segment midpoint")]
    VpAtSegmentMidpoint,
    #[error("rank deficient: segment lines do not constrain a vanishing point")]
    RankDeficient,
    #[error("directions are not parallel ({angle_deg:.3} deg > {tol_deg:.3} deg)")]
    NotParallel { angle_deg: f64, tol_deg: f64 },
    #[error("segments are not collinear ({angle_deg:.3} deg)")]
    NotCollinear { angle_deg: f64 },
    #[error("gauge unfixed: hold at least one pose fixed")]
    GaugeUnfixed,
    #[error("factor references unknown variable {0}")]
    UnknownVariable(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-monotonic timestamps at line {line}")]
    NonMonotonicTimestamps { line: usize },
    #[error("insufficient pairs for alignment: {0}")]
    InsufficientPairs(usize),
    #[error("degenerate geometry: positions are collinear")]
    DegenerateGeometry,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
