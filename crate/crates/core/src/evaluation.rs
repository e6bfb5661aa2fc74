//! Class-agnostic instance segmentation scoring.
//!
//! Predictions are ranked by confidence and greedily matched to the
//! unmatched ground-truth instance of highest IoU. AP is the area under the
//! precision/recall curve with all-point interpolation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn map_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Intersection over union of two sorted, deduplicated point-id lists.
pub fn iou(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Invalid("IoU of an empty set".into()));
    }
    let inter = intersection_size(pred, gt);
    Ok(inter as f64 / (pred.len() + gt.len() - inter) as f64)
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// A predicted instance: ascending point ids plus a ranking score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredInstance {
    pub points: Vec<usize>,
    pub confidence: f64,
}

/// Ranking order: descending confidence, then descending size, then
/// ascending first point id.
fn ranking(preds: &[ScoredInstance]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a], &preds[b]);
        pb.confidence
            .total_cmp(&pa.confidence)
            .then(pb.points.len().cmp(&pa.points.len()))
            .then(pa.points.first().cmp(&pb.points.first()))
            .then(a.cmp(&b))
    });
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatch {
    /// Rank position of the prediction (0 = most confident).
    pub rank: usize,
    pub size: usize,
    pub best_iou: f64,
    /// Ground-truth instance with the highest IoU, if any overlaps.
    pub best_gt: Option<usize>,
}

/// Greedy matching at one threshold; returns the true-positive flag per rank.
fn match_ranked(ious: &[Vec<f64>], order: &[usize], num_gt: usize, threshold: f64) -> Vec<bool> {
    let mut taken = vec![false; num_gt];
    order
        .iter()
        .map(|&p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in ious[p].iter().enumerate() {
                if !taken[g] && best.map_or(true, |(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, v)) if v >= threshold => {
                    taken[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

fn ap_from_hits(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return if hits.is_empty() { 1.0 } else { 0.0 };
    }
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // Precision envelope: best precision at this or any later rank.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..hits.len() {
        if recall[k] > prev_recall {
            ap += (recall[k] - prev_recall) * precision[k];
            prev_recall = recall[k];
        }
    }
    ap
}

fn iou_table(preds: &[ScoredInstance], gts: &[Vec<usize>]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    let inter = intersection_size(&p.points, g);
                    inter as f64 / (p.points.len() + g.len() - inter) as f64
                })
                .collect()
        })
        .collect()
}

/// AP of ranked predictions against ground truth at one IoU threshold.
///
/// With no ground truth, AP is 1 when there are also no predictions and 0
/// otherwise. Empty predictions are ignored.
pub fn average_precision(preds: &[ScoredInstance], gts: &[Vec<usize>], iou_threshold: f64) -> Result<f64> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::Invalid(format!("IoU threshold {iou_threshold} outside (0, 1)")));
    }
    let preds: Vec<ScoredInstance> = preds.iter().filter(|p| !p.points.is_empty()).cloned().collect();
    let gts: Vec<Vec<usize>> = gts.iter().filter(|g| !g.is_empty()).cloned().collect();
    let order = ranking(&preds);
    let ious = iou_table(&preds, &gts);
    Ok(ap_from_hits(&match_ranked(&ious, &order, gts.len(), iou_threshold), gts.len()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceProxy {
    /// Rank predicted instances by their (labeled) point count.
    #[default]
    PointCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub ap50: f64,
    pub ap25: f64,
    pub per_threshold: Vec<(f64, f64)>,
    pub matches: Vec<PredictionMatch>,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
    pub confidence_proxy: ConfidenceProxy,
    pub matching: String,
}

/// Split labels into point sets, dropping points where `keep` is false.
fn instances(labels: &[i64], keep: &[bool]) -> Vec<Vec<usize>> {
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for (p, &l) in labels.iter().enumerate() {
        if l < 0 || !keep[p] {
            continue;
        }
        let slot = *index.entry(l).or_insert_with(|| {
            sets.push(Vec::new());
            sets.len() - 1
        });
        sets[slot].push(p);
    }
    sets
}

/// Score a predicted labeling against ground truth.
///
/// Points unlabeled in the ground truth (`-1`) are removed from every set.
pub fn evaluate(pred: &Partition, gt: &Partition) -> Result<EvalReport> {
    evaluate_labels(&pred.labels, &gt.labels)
}

pub fn evaluate_labels(pred: &[i64], gt: &[i64]) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} labels, ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    let keep: Vec<bool> = gt.iter().map(|&l| l >= 0).collect();
    let gts = instances(gt, &keep);
    let preds: Vec<ScoredInstance> = instances(pred, &keep)
        .into_iter()
        .map(|points| ScoredInstance {
            confidence: points.len() as f64,
            points,
        })
        .collect();
    let order = ranking(&preds);
    let ious = iou_table(&preds, &gts);
    let ap_at = |t: f64| ap_from_hits(&match_ranked(&ious, &order, gts.len(), t), gts.len());

    let per_threshold: Vec<(f64, f64)> = map_thresholds().into_iter().map(|t| (t, ap_at(t))).collect();
    let map = per_threshold.iter().map(|(_, ap)| ap).sum::<f64>() / per_threshold.len() as f64;
    let matches = order
        .iter()
        .enumerate()
        .map(|(rank, &p)| {
            let best = ious[p]
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .fold(None, |acc: Option<(usize, f64)>, (g, &v)| match acc {
                    Some((_, b)) if b >= v => acc,
                    _ => Some((g, v)),
                });
            PredictionMatch {
                rank,
                size: preds[p].points.len(),
                best_iou: best.map_or(0.0, |b| b.1),
                best_gt: best.map(|b| b.0),
            }
        })
        .collect();
    Ok(EvalReport {
        map,
        ap50: per_threshold[0].1,
        ap25: ap_at(0.25),
        per_threshold,
        matches,
        num_predictions: preds.len(),
        num_ground_truth: gts.len(),
        confidence_proxy: ConfidenceProxy::PointCount,
        matching: "greedy: ranked predictions take the unmatched ground truth of highest IoU when IoU >= threshold".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(lo: usize, hi: usize) -> Vec<usize> {
        (lo..=hi).collect()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&range(1, 6), &range(1, 6)).unwrap(), 1.0);
        assert_eq!(iou(&range(1, 3), &range(4, 6)).unwrap(), 0.0);
        assert!((iou(&range(1, 6), &range(4, 9)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(iou(&[], &range(1, 2)).is_err());
    }

    #[test]
    fn half_overlap_threshold_is_inclusive() {
        let gt = vec![range(0, 99)];
        let pred = vec![ScoredInstance { points: range(0, 49), confidence: 1.0 }];
        assert_eq!(average_precision(&pred, &gt, 0.5).unwrap(), 1.0);
        assert_eq!(average_precision(&pred, &gt, 0.55).unwrap(), 0.0);
    }

    #[test]
    fn trailing_false_positive_keeps_ap_one() {
        let gts = vec![range(0, 9), range(10, 19)];
        let preds = vec![
            ScoredInstance { points: range(0, 8), confidence: 3.0 },
            ScoredInstance { points: range(10, 18), confidence: 2.0 },
            ScoredInstance { points: range(30, 35), confidence: 1.0 },
        ];
        assert_eq!(average_precision(&preds, &gts, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn empty_cases() {
        assert_eq!(average_precision(&[], &[], 0.5).unwrap(), 1.0);
        let p = vec![ScoredInstance { points: vec![1], confidence: 1.0 }];
        assert_eq!(average_precision(&p, &[], 0.5).unwrap(), 0.0);
        assert_eq!(average_precision(&[], &[vec![1]], 0.5).unwrap(), 0.0);
        assert!(average_precision(&p, &[], 1.0).is_err());
    }

    #[test]
    fn perfect_prediction() {
        let gt = vec![0, 0, 1, 1, 2, -1];
        let r = evaluate_labels(&[5, 5, 3, 3, 9, 9], &gt).unwrap();
        assert_eq!((r.map, r.ap50, r.ap25), (1.0, 1.0, 1.0));
        assert_eq!(r.num_ground_truth, 3);
    }

    #[test]
    fn one_blob_against_five_objects() {
        let gt: Vec<i64> = (0..50).map(|i| i / 10).collect();
        let r = evaluate_labels(&vec![0; 50], &gt).unwrap();
        assert_eq!(r.ap25, 0.0);
        assert_eq!(r.map, 0.0);
        assert!((r.matches[0].best_iou - 0.2).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(evaluate_labels(&[0, 0], &[0]).is_err());
    }
}
