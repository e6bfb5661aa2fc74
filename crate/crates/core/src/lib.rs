//! Class-agnostic 3D instance segmentation of indoor point clouds.
//!
//! The pipeline over-segments a colored point cloud into geometric
//! primitives, scores primitive pairs by how consistently they fall into
//! the same 2D masks across posed frames, grows instances over that graph
//! and optionally fuses fragments with 3D detection boxes.

pub mod affinity;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod frames;
pub mod geometry;
pub mod io;
pub mod merging;
pub mod partition;
pub mod pipeline;
pub mod primitives;
pub mod projection;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::PointCloud;
pub use partition::Partition;
pub use pipeline::{segment_scene, SegmentOutcome};
