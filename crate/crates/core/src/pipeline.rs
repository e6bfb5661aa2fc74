//! End-to-end segmentation and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affinity::build_affinity_graph;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frames::FrameSet;
use crate::geometry::PointCloud;
use crate::merging::{refine_with_boxes, region_grow, Box3D, Claim, GrowOutcome, RefineOutcome};
use crate::partition::Partition;
use crate::primitives::compute_primitives;

#[derive(Clone, Debug)]
pub struct SegmentOutcome {
    pub primitives: Partition,
    pub grow: GrowOutcome,
    pub refine: Option<RefineOutcome>,
    /// Final instance labels.
    pub partition: Partition,
}

/// Primitives, affinity graph, region growing and (with boxes) refinement.
pub fn segment_scene(
    cloud: &PointCloud,
    frames: &FrameSet,
    boxes: Option<&[Box3D]>,
    cfg: &PipelineConfig,
) -> Result<SegmentOutcome> {
    cfg.validate()?;
    cloud.validate()?;
    let primitives = compute_primitives(cloud, &cfg.primitives())?;
    log::info!("{} points -> {} primitives", cloud.len(), primitives.num_segments);
    let graph = build_affinity_graph(cloud, &primitives, frames, &cfg.affinity())?;
    let merge_cfg = cfg.merging();
    let grow = region_grow(&graph, &merge_cfg)?;
    log::info!("region growing: clusters after each pass {:?}", grow.clusters_after_pass);
    let refine = match boxes {
        Some(b) => Some(refine_with_boxes(&grow.partition, cloud, b, &merge_cfg)?),
        None => None,
    };
    if let Some(r) = &refine {
        log::info!("box refinement: {} claims", r.claims.len());
    }
    let partition = match &refine {
        Some(r) => Partition::renumbered(&r.partition.labels),
        None => grow.partition.clone(),
    };
    Ok(SegmentOutcome {
        primitives,
        grow,
        refine,
        partition,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(role: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(InputDigest {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    pub num_points: usize,
    pub num_frames: usize,
    pub num_primitives: usize,
    pub merges_per_pass: Vec<usize>,
    pub clusters_after_pass: Vec<usize>,
    pub num_boxes: Option<usize>,
    pub claims: Vec<Claim>,
    pub num_instances: usize,
    pub labels_sha256: String,
}

impl RunManifest {
    pub fn new(
        cfg: &PipelineConfig,
        inputs: Vec<InputDigest>,
        cloud: &PointCloud,
        frames: &FrameSet,
        boxes: Option<&[Box3D]>,
        outcome: &SegmentOutcome,
        labels_text: &str,
    ) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            inputs,
            num_points: cloud.len(),
            num_frames: frames.len(),
            num_primitives: outcome.primitives.num_segments,
            merges_per_pass: outcome.grow.merges_per_pass.clone(),
            clusters_after_pass: outcome.grow.clusters_after_pass.clone(),
            num_boxes: boxes.map(<[Box3D]>::len),
            claims: outcome.refine.as_ref().map(|r| r.claims.clone()).unwrap_or_default(),
            num_instances: outcome.partition.num_segments,
            labels_sha256: sha256_hex(labels_text.as_bytes()),
        }
    }
}
