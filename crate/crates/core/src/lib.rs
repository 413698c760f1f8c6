//! Structure-aware monocular SLAM back-end.
//!
//! Vanishing-direction primitives shared across frames, mapline verification
//! gates and a robust point/line/direction factor graph, with a synthetic
//! scene generator and trajectory evaluation for benchmarking.

pub mod error;
pub mod eval;
pub mod geom;
pub mod graph;
pub mod lines;
pub mod pipeline;
pub mod primitives;
pub mod sim;
pub mod vp;

pub use error::{Error, Result};
