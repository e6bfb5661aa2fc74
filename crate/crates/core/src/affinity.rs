//! Superpoint affinities from posed 2D masks.
//!
//! Each superpoint gets, per frame, a histogram of the mask ids its visible
//! points land on. Two superpoints' per-frame affinity is the cosine of
//! their histograms; frames are combined by a mean weighted with the
//! product of both visibilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::FrameSet;
use crate::geometry::{PointCloud, Vec3};
use crate::partition::Partition;
use crate::projection::{footprint, PixelFootprint, DEFAULT_DEPTH_TOLERANCE_M};

/// Marks superpoint pairs without any shared evidence.
pub const UNDEFINED_AFFINITY: f64 = -1.0;

pub const DEFAULT_MIN_GAMMA: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityConfig {
    pub depth_tolerance_m: f64,
    pub min_gamma: f64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        AffinityConfig {
            depth_tolerance_m: DEFAULT_DEPTH_TOLERANCE_M,
            min_gamma: DEFAULT_MIN_GAMMA,
        }
    }
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_tolerance_m > 0.0 && self.depth_tolerance_m.is_finite()) {
            return Err(Error::Config("depth_tolerance_m must be > 0".into()));
        }
        if !(self.min_gamma >= 0.0 && self.min_gamma <= 1.0) {
            return Err(Error::Config("min_gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-pixel 2D mask ids; 0 is unlabeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskRaster {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
}

impl MaskRaster {
    pub fn new(width: usize, height: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask raster {width}x{height} has {} values",
                ids.len()
            )));
        }
        Ok(MaskRaster { width, height, ids })
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> u32 {
        self.ids[v * self.width + u]
    }
}

/// Mask-id counts of one superpoint in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameHistogram {
    pub superpoint: usize,
    pub frame_id: i64,
    /// `(mask id, point count)` sorted by mask id; never contains id 0.
    pub counts: Vec<(u32, u32)>,
    /// Visible points, including those on unlabeled pixels.
    pub visible: usize,
    pub total: usize,
}

impl FrameHistogram {
    pub fn visibility(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.visible as f64 / self.total as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Cosine similarity of two sparse count vectors sorted by key.
pub(crate) fn cosine_counts(a: &[(u32, u32)], b: &[(u32, u32)]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let norm = |h: &[(u32, u32)]| h.iter().map(|&(_, c)| (c as f64) * (c as f64)).sum::<f64>().sqrt();
    let mut dot = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 as f64 * b[j].1 as f64;
                i += 1;
                j += 1;
            }
        }
    }
    Some((dot / (norm(a) * norm(b))).min(1.0))
}

/// Per-frame histograms of every superpoint.
///
/// The result is indexed by superpoint id.
pub fn frame_histograms(
    footprint: &PixelFootprint,
    masks: &MaskRaster,
    partition: &Partition,
) -> Result<Vec<FrameHistogram>> {
    if masks.width != footprint.width || masks.height != footprint.height {
        return Err(Error::Dimension(format!(
            "frame {}: mask raster is {}x{} but footprint is {}x{}",
            footprint.frame_id, masks.width, masks.height, footprint.width, footprint.height
        )));
    }
    let sizes = partition.segment_sizes();
    let mut hits: Vec<Vec<u32>> = vec![Vec::new(); partition.num_segments];
    let mut visible = vec![0usize; partition.num_segments];
    for e in &footprint.entries {
        let label = *partition.labels.get(e.point).ok_or_else(|| {
            Error::Dimension(format!(
                "footprint point {} outside a partition of {} points",
                e.point,
                partition.len()
            ))
        })?;
        if label < 0 || !e.visible {
            continue;
        }
        let sp = label as usize;
        visible[sp] += 1;
        let id = masks.at(e.u, e.v);
        if id != 0 {
            hits[sp].push(id);
        }
    }
    Ok(hits
        .into_iter()
        .enumerate()
        .map(|(sp, mut ids)| {
            ids.sort_unstable();
            let mut counts: Vec<(u32, u32)> = Vec::new();
            for id in ids {
                match counts.last_mut() {
                    Some((last, c)) if *last == id => *c += 1,
                    _ => counts.push((id, 1)),
                }
            }
            FrameHistogram {
                superpoint: sp,
                frame_id: footprint.frame_id,
                counts,
                visible: visible[sp],
                total: sizes[sp],
            }
        })
        .collect())
}

/// Cosine affinity of two superpoints in one frame; `None` if either
/// histogram is empty.
pub fn frame_affinity(h_i: &FrameHistogram, h_j: &FrameHistogram) -> Result<Option<f64>> {
    if h_i.frame_id != h_j.frame_id {
        return Err(Error::Invalid(format!(
            "histograms come from frames {} and {}",
            h_i.frame_id, h_j.frame_id
        )));
    }
    Ok(cosine_counts(&h_i.counts, &h_j.counts))
}

/// Visibility-weighted mean of per-frame affinities.
///
/// Each item is `(affinity, visibility_i, visibility_j)`; frames whose weight
/// `visibility_i * visibility_j` falls below `min_gamma` are ignored.
pub fn aggregate_affinity(per_frame: &[(f64, f64, f64)], min_gamma: f64) -> Option<f64> {
    let mut acc = WeightedMean::default();
    for &(a, vi, vj) in per_frame {
        acc.add(a, vi * vj, min_gamma);
    }
    acc.finish()
}

#[derive(Default)]
struct WeightedMean {
    num: f64,
    den: f64,
}

impl WeightedMean {
    #[inline]
    fn add(&mut self, value: f64, gamma: f64, min_gamma: f64) {
        if gamma >= min_gamma && gamma > 0.0 {
            self.num += gamma * value;
            self.den += gamma;
        }
    }

    fn finish(&self) -> Option<f64> {
        (self.den > 0.0).then(|| (self.num / self.den).clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct FrameEvidence {
    /// Position of the frame in the frame set (ascending frame id).
    pub frame: usize,
    pub visible: usize,
    pub counts: Vec<(u32, u32)>,
}

/// `(frame position, visible points, mask counts)` for one frame.
pub type FrameItem = (usize, usize, Vec<(u32, u32)>);

/// Mask evidence of a set of points (a superpoint or a merged cluster):
/// its point count and per-frame histograms for frames where it is visible.
#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    pub(crate) size: usize,
    pub(crate) frames: Vec<FrameEvidence>,
}

impl Evidence {
    /// Evidence from `(frame position, visible points, mask counts)` items.
    /// Counts are sorted and merged by mask id; id 0 is dropped.
    pub fn new(size: usize, frames: Vec<FrameItem>) -> Result<Self> {
        let mut frames: Vec<FrameEvidence> = frames
            .into_iter()
            .map(|(frame, visible, mut counts)| {
                counts.retain(|&(id, c)| id != 0 && c > 0);
                counts.sort_unstable();
                let counts = counts.iter().fold(Vec::new(), |acc: Vec<(u32, u32)>, &c| add_counts(&acc, &[c]));
                FrameEvidence {
                    frame,
                    visible,
                    counts,
                }
            })
            .collect();
        frames.sort_by_key(|f| f.frame);
        if frames.windows(2).any(|w| w[0].frame == w[1].frame) {
            return Err(Error::Invalid("evidence lists a frame twice".into()));
        }
        if frames.iter().any(|f| f.visible > size) {
            return Err(Error::Invalid("more visible points than points".into()));
        }
        Ok(Evidence { size, frames })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Affinity between two evidence sets, aggregated over shared frames.
    pub fn affinity(&self, other: &Evidence, min_gamma: f64) -> Option<f64> {
        let mut acc = WeightedMean::default();
        let (a, b) = (&self.frames, &other.frames);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].frame.cmp(&b[j].frame) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if let Some(cos) = cosine_counts(&a[i].counts, &b[j].counts) {
                        let vi = a[i].visible as f64 / self.size as f64;
                        let vj = b[j].visible as f64 / other.size as f64;
                        acc.add(cos, vi * vj, min_gamma);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        acc.finish()
    }

    /// Evidence of the union of two disjoint point sets: counts and
    /// visible points add up frame by frame.
    pub fn merged(&self, other: &Evidence) -> Evidence {
        let mut frames = Vec::with_capacity(self.frames.len().max(other.frames.len()));
        let (a, b) = (&self.frames, &other.frames);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let take_a = j >= b.len() || (i < a.len() && a[i].frame < b[j].frame);
            let take_b = i >= a.len() || (j < b.len() && b[j].frame < a[i].frame);
            if take_a {
                frames.push(a[i].clone());
                i += 1;
            } else if take_b {
                frames.push(b[j].clone());
                j += 1;
            } else {
                frames.push(FrameEvidence {
                    frame: a[i].frame,
                    visible: a[i].visible + b[j].visible,
                    counts: add_counts(&a[i].counts, &b[j].counts),
                });
                i += 1;
                j += 1;
            }
        }
        Evidence {
            size: self.size + other.size,
            frames,
        }
    }
}

fn add_counts(a: &[(u32, u32)], b: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push(b[j]);
            j += 1;
        } else {
            out.push((a[i].0, a[i].1 + b[j].1));
            i += 1;
            j += 1;
        }
    }
    out
}

/// Superpoint graph: nodes are superpoints, edge weights are affinities.
#[derive(Clone, Debug)]
pub struct AffinityGraph {
    pub num_points: usize,
    pub num_superpoints: usize,
    /// Row-major `num_superpoints^2` matrix; [`UNDEFINED_AFFINITY`] where
    /// two superpoints never share a frame in which both hit a mask.
    pub adjacency: Vec<f64>,
    pub centroids: Vec<Vec3>,
    pub sizes: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub evidence: Vec<Evidence>,
    pub frame_ids: Vec<i64>,
    pub min_gamma: f64,
}

impl AffinityGraph {
    #[inline]
    pub fn affinity(&self, i: usize, j: usize) -> Option<f64> {
        let a = self.adjacency[i * self.num_superpoints + j];
        (a >= 0.0).then_some(a)
    }

    /// Build the graph from per-superpoint evidence and geometry.
    pub fn from_evidence(
        cloud: &PointCloud,
        partition: &Partition,
        evidence: Vec<Evidence>,
        frame_ids: Vec<i64>,
        min_gamma: f64,
    ) -> Result<Self> {
        let n = partition.num_segments;
        if evidence.len() != n {
            return Err(Error::Dimension(format!(
                "{} evidence sets for {n} superpoints",
                evidence.len()
            )));
        }
        let members = partition.members();
        let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
        let centroids = members
            .iter()
            .map(|m| {
                let mut sum = Vec3::zeros();
                for &p in m {
                    sum += cloud.positions[p];
                }
                sum / m.len() as f64
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let (a, b) = if i <= j { (i, j) } else { (j, i) };
                        evidence[a]
                            .affinity(&evidence[b], min_gamma)
                            .unwrap_or(UNDEFINED_AFFINITY)
                    })
                    .collect()
            })
            .collect();
        Ok(AffinityGraph {
            num_points: partition.len(),
            num_superpoints: n,
            adjacency: rows.concat(),
            centroids,
            sizes,
            members,
            evidence,
            frame_ids,
            min_gamma,
        })
    }
}

/// Project every frame, collect mask histograms and build the superpoint graph.
pub fn build_affinity_graph(
    cloud: &PointCloud,
    partition: &Partition,
    frames: &FrameSet,
    cfg: &AffinityConfig,
) -> Result<AffinityGraph> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::Invalid("affinity graph needs at least one frame".into()));
    }
    if partition.len() != cloud.len() {
        return Err(Error::Dimension(format!(
            "partition has {} labels for {} points",
            partition.len(),
            cloud.len()
        )));
    }
    partition.check_invariants()?;
    let per_frame: Vec<Vec<FrameHistogram>> = frames
        .frames
        .par_iter()
        .map(|frame| {
            let fp = footprint(cloud, partition, &frame.camera, &frame.depth, cfg.depth_tolerance_m)?;
            frame_histograms(&fp, &frame.masks, partition)
        })
        .collect::<Result<_>>()?;

    let sizes = partition.segment_sizes();
    let mut evidence: Vec<Evidence> = sizes
        .iter()
        .map(|&size| Evidence {
            size,
            frames: Vec::new(),
        })
        .collect();
    for (f, hists) in per_frame.into_iter().enumerate() {
        for h in hists {
            if h.visible > 0 {
                evidence[h.superpoint].frames.push(FrameEvidence {
                    frame: f,
                    visible: h.visible,
                    counts: h.counts,
                });
            }
        }
    }
    let frame_ids = frames.frames.iter().map(|f| f.camera.frame_id).collect();
    AffinityGraph::from_evidence(cloud, partition, evidence, frame_ids, cfg.min_gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(frame_id: i64, counts: &[(u32, u32)], visible: usize, total: usize) -> FrameHistogram {
        FrameHistogram {
            superpoint: 0,
            frame_id,
            counts: counts.to_vec(),
            visible,
            total,
        }
    }

    #[test]
    fn cosine_examples() {
        let a = frame_affinity(&hist(0, &[(1, 10)], 10, 10), &hist(0, &[(1, 5)], 5, 5)).unwrap();
        assert_eq!(a, Some(1.0));
        let b = frame_affinity(&hist(0, &[(1, 10)], 10, 10), &hist(0, &[(2, 5)], 5, 5)).unwrap();
        assert_eq!(b, Some(0.0));
        let c = frame_affinity(&hist(0, &[(1, 3), (2, 4)], 7, 7), &hist(0, &[(1, 4), (2, 3)], 7, 7))
            .unwrap()
            .unwrap();
        assert!((c - 0.96).abs() < 1e-12);
        assert_eq!(frame_affinity(&hist(0, &[], 3, 3), &hist(0, &[(1, 1)], 1, 1)).unwrap(), None);
        assert!(frame_affinity(&hist(0, &[(1, 1)], 1, 1), &hist(1, &[(1, 1)], 1, 1)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_affinity(&[(0.8, 0.5, 0.5)], 1e-4), Some(0.8));
        let v = aggregate_affinity(&[(0.8, 0.5, 1.0), (0.4, 0.5, 0.5)], 1e-4).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(aggregate_affinity(&[(0.9, 0.001, 0.01)], 1e-4), None);
        assert_eq!(aggregate_affinity(&[], 1e-4), None);
    }

    #[test]
    fn merged_evidence_adds_counts() {
        let a = Evidence {
            size: 4,
            frames: vec![
                FrameEvidence { frame: 0, visible: 2, counts: vec![(1, 2)] },
                FrameEvidence { frame: 2, visible: 1, counts: vec![(3, 1)] },
            ],
        };
        let b = Evidence {
            size: 6,
            frames: vec![
                FrameEvidence { frame: 1, visible: 6, counts: vec![(5, 6)] },
                FrameEvidence { frame: 2, visible: 3, counts: vec![(2, 1), (3, 2)] },
            ],
        };
        let m = a.merged(&b);
        assert_eq!(m.size, 10);
        assert_eq!(m.frames.len(), 3);
        assert_eq!(m.frames[2].counts, vec![(2, 1), (3, 3)]);
        assert_eq!(m.frames[2].visible, 4);
        assert_eq!(m, b.merged(&a));
    }
}
