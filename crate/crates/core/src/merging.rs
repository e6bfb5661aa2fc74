//! Region growing over the superpoint graph and box-guided refinement.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityGraph, Evidence, UNDEFINED_AFFINITY};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::partition::Partition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Region-growing thresholds, one pass each, strictly descending.
    pub delta1_schedule: Vec<f64>,
    /// Fraction of an instance that must fall inside a box for the box to claim it.
    pub delta2: f64,
    /// Lower clamp (meters) on the centroid distance in the decay factor.
    pub distance_floor: f64,
    /// Process boxes smallest-first (`true`) or largest-first.
    pub ascending_boxes: bool,
    /// Instances claimed by one box are left alone by later boxes.
    pub exclusion_after_claim: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            delta1_schedule: vec![0.9, 0.8, 0.7, 0.6, 0.5],
            delta2: 0.75,
            distance_floor: 1.0,
            ascending_boxes: true,
            exclusion_after_claim: true,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.delta1_schedule;
        if s.is_empty() {
            return Err(Error::Config("delta1_schedule must not be empty".into()));
        }
        if s.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("delta1_schedule values must lie in (0, 1]".into()));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("delta1_schedule must be strictly descending".into()));
        }
        if !(self.delta2 > 0.0 && self.delta2 < 1.0) {
            return Err(Error::Config("delta2 must lie in (0, 1)".into()));
        }
        if !(self.distance_floor > 0.0 && self.distance_floor.is_finite()) {
            return Err(Error::Config("distance_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box3D {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Box3D {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Box3D { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.min.iter().chain(&self.max).all(|v| v.is_finite());
        if !finite || (0..3).any(|a| self.max[a] <= self.min[a]) {
            return Err(Error::Boxes(format!(
                "box {:?}..{:?} must have positive extent on every axis",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

pub fn parse_boxes(text: &str) -> Result<Vec<Box3D>> {
    let boxes: Vec<Box3D> =
        serde_json::from_str(text).map_err(|e| Error::Boxes(e.to_string()))?;
    for (i, b) in boxes.iter().enumerate() {
        b.validate()
            .map_err(|e| Error::Boxes(format!("box {i}: {e}")))?;
    }
    Ok(boxes)
}

pub fn load_boxes(path: impl AsRef<Path>) -> Result<Vec<Box3D>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text).map_err(|e| Error::Boxes(format!("{}: {e}", path.display())))
}

pub fn boxes_to_json(boxes: &[Box3D]) -> String {
    serde_json::to_string_pretty(boxes).expect("boxes serialize") + "\n"
}

/// Affinity decayed by centroid distance: `a / max(dist, floor)`.
pub fn merge_confidence(a: f64, dist: f64, floor: f64) -> f64 {
    a / dist.max(floor)
}

/// One accepted merge during region growing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub pass: usize,
    pub threshold: f64,
    /// Surviving cluster slot (the smaller of the two).
    pub kept: usize,
    pub absorbed: usize,
    pub affinity: f64,
    pub distance: f64,
    pub confidence: f64,
}

#[derive(Clone, Debug)]
pub struct GrowOutcome {
    pub partition: Partition,
    /// Superpoint -> cluster id, numbered like `partition`.
    pub superpoint_cluster: Vec<usize>,
    pub merges: Vec<MergeEvent>,
    pub merges_per_pass: Vec<usize>,
    pub clusters_after_pass: Vec<usize>,
}

struct Cluster {
    evidence: Evidence,
    position_sum: Vec3,
    size: usize,
    version: u64,
}

impl Cluster {
    fn centroid(&self) -> Vec3 {
        self.position_sum / self.size as f64
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    confidence: f64,
    i: usize,
    j: usize,
    version_i: u64,
    version_j: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Max-heap on confidence; equal confidences pop in ascending (i, j).
    fn cmp(&self, other: &Self) -> Ordering {
        self.confidence
            .total_cmp(&other.confidence)
            .then_with(|| other.i.cmp(&self.i))
            .then_with(|| other.j.cmp(&self.j))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy multi-threshold region growing.
///
/// Each threshold of the schedule is one pass. Within a pass the pair with
/// the highest confidence is merged while it reaches the threshold; merged
/// clusters pool their mask histograms and their affinities to all other
/// clusters are recomputed from the pooled histograms.
pub fn region_grow(graph: &AffinityGraph, cfg: &MergeConfig) -> Result<GrowOutcome> {
    cfg.validate()?;
    let n = graph.num_superpoints;
    let mut clusters: Vec<Option<Cluster>> = (0..n)
        .map(|i| {
            Some(Cluster {
                evidence: graph.evidence[i].clone(),
                position_sum: graph.centroids[i] * graph.sizes[i] as f64,
                size: graph.sizes[i],
                version: 0,
            })
        })
        .collect();
    let mut affinity = graph.adjacency.clone();
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::new();
    let mut merges_per_pass = Vec::with_capacity(cfg.delta1_schedule.len());
    let mut clusters_after_pass = Vec::with_capacity(cfg.delta1_schedule.len());

    let candidate = |clusters: &[Option<Cluster>], affinity: &[f64], i: usize, j: usize| {
        let a = affinity[i * n + j];
        if a < 0.0 {
            return None;
        }
        let (ci, cj) = (clusters[i].as_ref()?, clusters[j].as_ref()?);
        let dist = (ci.centroid() - cj.centroid()).norm();
        Some(Candidate {
            confidence: merge_confidence(a, dist, cfg.distance_floor),
            i,
            j,
            version_i: ci.version,
            version_j: cj.version,
        })
    };

    for (pass, &threshold) in cfg.delta1_schedule.iter().enumerate() {
        let alive: Vec<usize> = (0..n).filter(|&i| clusters[i].is_some()).collect();
        let mut heap: BinaryHeap<Candidate> = alive
            .par_iter()
            .enumerate()
            .flat_map_iter(|(pos, &i)| {
                let clusters = &clusters;
                let affinity = &affinity;
                alive[pos + 1..]
                    .iter()
                    .filter_map(move |&j| candidate(clusters, affinity, i, j))
                    .filter(|c| c.confidence >= threshold)
            })
            .collect::<Vec<_>>()
            .into();
        let mut merged_this_pass = 0;
        while let Some(c) = heap.pop() {
            let fresh = matches!(
                (&clusters[c.i], &clusters[c.j]),
                (Some(a), Some(b)) if a.version == c.version_i && b.version == c.version_j
            );
            if !fresh {
                continue;
            }
            if c.confidence < threshold {
                break;
            }
            let absorbed = clusters[c.j].take().expect("fresh candidate");
            let kept = clusters[c.i].as_mut().expect("fresh candidate");
            let distance = (kept.centroid() - absorbed.centroid()).norm();
            merges.push(MergeEvent {
                pass,
                threshold,
                kept: c.i,
                absorbed: c.j,
                affinity: affinity[c.i * n + c.j],
                distance,
                confidence: c.confidence,
            });
            kept.evidence = kept.evidence.merged(&absorbed.evidence);
            kept.position_sum += absorbed.position_sum;
            kept.size += absorbed.size;
            kept.version += 1;
            for o in owner.iter_mut() {
                if *o == c.j {
                    *o = c.i;
                }
            }
            for k in 0..n {
                affinity[c.j * n + k] = UNDEFINED_AFFINITY;
                affinity[k * n + c.j] = UNDEFINED_AFFINITY;
            }
            merged_this_pass += 1;

            let kept_ref = clusters[c.i].as_ref().expect("kept cluster");
            let row: Vec<(usize, f64)> = (0..n)
                .into_par_iter()
                .filter(|&k| k != c.i)
                .filter_map(|k| {
                    let other = clusters[k].as_ref()?;
                    let a = kept_ref
                        .evidence
                        .affinity(&other.evidence, graph.min_gamma)
                        .unwrap_or(UNDEFINED_AFFINITY);
                    Some((k, a))
                })
                .collect();
            for (k, a) in row {
                affinity[c.i * n + k] = a;
                affinity[k * n + c.i] = a;
                let (lo, hi) = if k < c.i { (k, c.i) } else { (c.i, k) };
                if let Some(cand) = candidate(&clusters, &affinity, lo, hi) {
                    if cand.confidence >= threshold {
                        heap.push(cand);
                    }
                }
            }
        }
        merges_per_pass.push(merged_this_pass);
        clusters_after_pass.push(clusters.iter().filter(|c| c.is_some()).count());
    }

    // Points inherit the cluster of their superpoint.
    let mut raw = vec![-1i64; graph.num_points];
    for (sp, members) in graph.members.iter().enumerate() {
        for &p in members {
            raw[p] = owner[sp] as i64;
        }
    }
    let partition = Partition::renumbered(&raw);
    let superpoint_cluster = graph
        .members
        .iter()
        .map(|m| partition.labels[m[0]] as usize)
        .collect();
    Ok(GrowOutcome {
        partition,
        superpoint_cluster,
        merges,
        merges_per_pass,
        clusters_after_pass,
    })
}

/// A box relabeling a whole instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    /// Index of the box in the caller's list.
    pub box_index: usize,
    /// Instance id at the time of the claim.
    pub instance: i64,
    pub new_label: i64,
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub partition: Partition,
    pub claims: Vec<Claim>,
    /// Box indices in processing order.
    pub box_order: Vec<usize>,
}

/// Relabel instances mostly contained in detection boxes.
///
/// Boxes are visited by volume. For each box, every instance with more
/// than `delta2` of its points inside is moved to a fresh label shared by
/// everything that box claims, which fuses fragments of one object.
pub fn refine_with_boxes(
    labels: &Partition,
    cloud: &PointCloud,
    boxes: &[Box3D],
    cfg: &MergeConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    if labels.len() != cloud.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} points",
            labels.len(),
            cloud.len()
        )));
    }
    for (i, b) in boxes.iter().enumerate() {
        b.validate().map_err(|e| Error::Boxes(format!("box {i}: {e}")))?;
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // Stable sort keeps input order among equal volumes.
    order.sort_by(|&a, &b| {
        let o = boxes[a].volume().total_cmp(&boxes[b].volume());
        if cfg.ascending_boxes {
            o
        } else {
            o.reverse()
        }
    });

    let mut current = labels.labels.clone();
    let first_new = current.iter().copied().max().unwrap_or(-1) + 1;
    let capacity = (first_new as usize) + boxes.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); capacity];
    for (p, &l) in current.iter().enumerate() {
        if l >= 0 {
            members[l as usize].push(p);
        }
    }
    let inside: Vec<Vec<usize>> = order
        .par_iter()
        .map(|&b| {
            (0..cloud.len())
                .filter(|&p| boxes[b].contains(&cloud.positions[p]))
                .collect()
        })
        .collect();

    let mut claimed = vec![false; capacity];
    let mut claims = Vec::new();
    let mut next = first_new;
    for (slot, &b) in order.iter().enumerate() {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &p in &inside[slot] {
            if current[p] >= 0 {
                *counts.entry(current[p]).or_default() += 1;
            }
        }
        for (id, count) in counts {
            if cfg.exclusion_after_claim && claimed[id as usize] {
                continue;
            }
            let sigma = count as f64 / members[id as usize].len() as f64;
            if sigma > cfg.delta2 {
                let moved = std::mem::take(&mut members[id as usize]);
                for &p in &moved {
                    current[p] = next;
                }
                members[next as usize].extend(moved);
                claimed[next as usize] = true;
                claims.push(Claim {
                    box_index: b,
                    instance: id,
                    new_label: next,
                    sigma,
                });
            }
        }
        next += 1;
    }
    // Without claims the input labeling is returned untouched.
    let partition = if claims.is_empty() {
        labels.clone()
    } else {
        Partition::renumbered(&current)
    };
    Ok(RefineOutcome {
        partition,
        claims,
        box_order: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_examples() {
        assert!((merge_confidence(0.9, 2.0, 1.0) - 0.45).abs() < 1e-12);
        assert_eq!(merge_confidence(0.9, 0.5, 1.0), 0.9);
        assert_eq!(merge_confidence(0.0, 0.3, 1.0), 0.0);
        assert_eq!(merge_confidence(0.0, 7.0, 1.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig::default().validate().is_ok());
        let bad = |f: fn(&mut MergeConfig)| {
            let mut c = MergeConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.delta1_schedule.clear()));
        assert!(bad(|c| c.delta1_schedule = vec![0.5, 0.7]));
        assert!(bad(|c| c.delta1_schedule = vec![0.9, 0.9]));
        assert!(bad(|c| c.delta2 = 1.0));
        assert!(bad(|c| c.distance_floor = 0.0));
    }

    #[test]
    fn box_parsing() {
        let boxes = parse_boxes(r#"[{"min":[0,0,0],"max":[1,2,3]}]"#).unwrap();
        assert_eq!(boxes[0].volume(), 6.0);
        assert!(parse_boxes(r#"[{"min":[0,0,0],"max":[1,0,3]}]"#).is_err());
        assert!(parse_boxes(r#"[{"min":[0,0,0],"max":[1,1,1],"score":1}]"#).is_err());
        assert_eq!(parse_boxes(&boxes_to_json(&boxes)).unwrap(), boxes);
    }

    fn line_cloud(n: usize) -> PointCloud {
        PointCloud::new(
            (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
            vec![Vec3::zeros(); n],
        )
        .unwrap()
    }

    fn span(lo: f64, hi: f64) -> Box3D {
        Box3D::new([lo, -1.0, -1.0], [hi, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn box_claims_whole_instance() {
        let cloud = line_cloud(5);
        let labels = Partition::from_labels(vec![0, 0, 1, 1, 1]).unwrap();
        let out = refine_with_boxes(&labels, &cloud, &[span(1.5, 4.5)], &MergeConfig::default()).unwrap();
        assert_eq!(out.partition.labels, vec![0, 0, 1, 1, 1]);
        assert_eq!(out.claims.len(), 1);
        assert_eq!(out.claims[0].instance, 1);
        assert_eq!(out.claims[0].new_label, 2);
        assert_eq!(out.claims[0].sigma, 1.0);
    }

    #[test]
    fn box_fuses_fragments() {
        // Instance 2 and 3 are two halves of one object; a box holds 80% of each.
        let cloud = line_cloud(22);
        let mut raw = vec![0i64; 2];
        raw.extend(vec![1; 10]);
        raw.extend(vec![2; 5]);
        raw.extend(vec![3; 5]);
        let labels = Partition::from_labels(raw).unwrap();
        // Covers points 12..=15 (4/5 of id 2) and 17..=20 (4/5 of id 3).
        let b = span(12.5 - 0.6, 20.1);
        let out = refine_with_boxes(&labels, &cloud, &[b], &MergeConfig::default()).unwrap();
        assert_eq!(out.partition.num_segments, 3);
        assert_eq!(out.partition.labels[12], out.partition.labels[21]);
        assert_ne!(out.partition.labels[12], out.partition.labels[2]);
    }

    #[test]
    fn sigma_must_exceed_delta2_strictly() {
        let cloud = line_cloud(4);
        let labels = Partition::from_labels(vec![0, 0, 0, 0]).unwrap();
        let cfg = MergeConfig {
            delta2: 0.75,
            ..MergeConfig::default()
        };
        let out = refine_with_boxes(&labels, &cloud, &[span(-0.5, 2.5)], &cfg).unwrap();
        assert!(out.claims.is_empty());
    }

    #[test]
    fn no_boxes_is_identity() {
        let cloud = line_cloud(4);
        let labels = Partition::from_labels(vec![1, 0, -1, 1]).unwrap();
        let out = refine_with_boxes(&labels, &cloud, &[], &MergeConfig::default()).unwrap();
        assert_eq!(out.partition, labels);
    }

    #[test]
    fn exclusion_protects_claimed_instances() {
        // Instance 0: points 0..=1 (small object), instance 1: points 2..=9.
        let cloud = line_cloud(10);
        let labels = Partition::from_labels(vec![0, 0, 1, 1, 1, 1, 1, 1, 1, 1]).unwrap();
        let boxes = [span(-0.5, 9.5), span(-0.5, 1.5)];
        let on = refine_with_boxes(&labels, &cloud, &boxes, &MergeConfig::default()).unwrap();
        assert_eq!(on.partition.num_segments, 2);
        assert_eq!(on.box_order, vec![1, 0]);
        let off_cfg = MergeConfig {
            exclusion_after_claim: false,
            ..MergeConfig::default()
        };
        let off = refine_with_boxes(&labels, &cloud, &boxes, &off_cfg).unwrap();
        assert_eq!(off.partition.num_segments, 1);
        let reclaimed: Vec<_> = off.claims.iter().filter(|c| c.box_index == 0).collect();
        assert_eq!(reclaimed.len(), 2);
    }
}
