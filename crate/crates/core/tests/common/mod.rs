//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use primseg::geometry::{PointCloud, Vec3};
use primseg::primitives::Edge;
use primseg::synth::{Axis, CameraSpec, Intrinsics, ObjectSpec, Orbit, RoomBounds, SceneSpec};
use rand::Rng;

/// Graph segmentation by direct transcription of the merge rule, with
/// components stored as a flat label array relabeled on every merge.
pub fn segment_graph_oracle(edges: &[Edge], n: usize, k: f64, min_size: usize) -> Vec<i64> {
    let mut comp: Vec<usize> = (0..n).collect();
    let mut internal = vec![0.0f64; n];
    let size_of = |comp: &[usize], c: usize| comp.iter().filter(|&&x| x == c).count();
    let merge = |comp: &mut Vec<usize>, internal: &mut Vec<f64>, ca: usize, cb: usize, w: f64| {
        for x in comp.iter_mut() {
            if *x == cb {
                *x = ca;
            }
        }
        internal[ca] = internal[ca].max(internal[cb]).max(w);
    };
    for e in edges {
        let (ca, cb) = (comp[e.a], comp[e.b]);
        if ca == cb {
            continue;
        }
        let ta = internal[ca] + k / size_of(&comp, ca) as f64;
        let tb = internal[cb] + k / size_of(&comp, cb) as f64;
        if e.weight <= ta.min(tb) {
            merge(&mut comp, &mut internal, ca, cb, e.weight);
        }
    }
    for e in edges {
        let (ca, cb) = (comp[e.a], comp[e.b]);
        if ca != cb && (size_of(&comp, ca) < min_size || size_of(&comp, cb) < min_size) {
            merge(&mut comp, &mut internal, ca, cb, e.weight);
        }
    }
    first_occurrence(&comp.iter().map(|&c| c as i64).collect::<Vec<_>>())
}

/// Relabel by order of first appearance; negatives become -1.
pub fn first_occurrence(raw: &[i64]) -> Vec<i64> {
    let mut seen: Vec<i64> = Vec::new();
    raw.iter()
        .map(|&l| {
            if l < 0 {
                return -1;
            }
            match seen.iter().position(|&s| s == l) {
                Some(p) => p as i64,
                None => {
                    seen.push(l);
                    seen.len() as i64 - 1
                }
            }
        })
        .collect()
}

/// Random graph with sorted edges and weights drawn from a small set so
/// that ties are common.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> (Vec<Edge>, usize) {
    let n = rng.gen_range(1..=max_nodes);
    let m = if n > 1 { rng.gen_range(0..=3 * n) } else { 0 };
    let mut pairs = HashSet::new();
    let mut edges = Vec::new();
    for _ in 0..m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b || !pairs.insert((a.min(b), a.max(b))) {
            continue;
        }
        let weight = if rng.gen_bool(0.5) {
            rng.gen_range(0..10) as f64 / 20.0
        } else {
            rng.gen::<f64>()
        };
        edges.push(Edge {
            a: a.min(b),
            b: a.max(b),
            weight,
        });
    }
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    (edges, n)
}

/// AP by explicit enumeration: rank, match greedily with hash sets, then
/// sum recall steps weighted by the best precision at or after each step.
pub fn ap_oracle(preds: &[(Vec<usize>, f64)], gts: &[Vec<usize>], thr: f64) -> f64 {
    let preds: Vec<&(Vec<usize>, f64)> = preds.iter().filter(|p| !p.0.is_empty()).collect();
    let gts: Vec<HashSet<usize>> = gts
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| g.iter().copied().collect())
        .collect();
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ranked = preds.clone();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(b.0.len().cmp(&a.0.len()))
            .then(a.0.iter().min().cmp(&b.0.iter().min()))
    });
    let mut used = vec![false; gts.len()];
    let mut tp_flags = Vec::new();
    for (points, _) in ranked {
        let set: HashSet<usize> = points.iter().copied().collect();
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let inter = set.intersection(gt).count() as f64;
            let iou = inter / set.union(gt).count() as f64;
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) if iou >= thr => {
                used[g] = true;
                tp_flags.push(true);
            }
            _ => tp_flags.push(false),
        }
    }
    let precision_at: Vec<f64> = (0..tp_flags.len())
        .map(|k| tp_flags[..=k].iter().filter(|&&t| t).count() as f64 / (k + 1) as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..tp_flags.len() {
        if tp_flags[k] {
            let best_after = precision_at[k..].iter().cloned().fold(0.0, f64::max);
            ap += best_after / gts.len() as f64;
        }
    }
    ap
}

/// Two coplanar half-planes z = 0: red for x < 0, blue for x >= 0, on a
/// jittered grid. Normals are left for the pipeline to estimate.
pub fn two_color_plane(rng: &mut impl Rng, side: usize, spacing: f64) -> PointCloud {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let half = side as f64 * spacing / 2.0;
    for i in 0..side {
        for j in 0..side {
            let x = -half + (i as f64 + rng.gen_range(0.2..0.8)) * spacing;
            let y = -half + (j as f64 + rng.gen_range(0.2..0.8)) * spacing;
            positions.push(Vec3::new(x, y, 0.0));
            colors.push(if x < 0.0 {
                Vec3::new(1.0, 0.0, 0.0)
            } else {
                Vec3::new(0.0, 0.0, 1.0)
            });
        }
    }
    PointCloud::new(positions, colors).unwrap()
}

pub fn small_intrinsics() -> Intrinsics {
    Intrinsics {
        width: 160,
        height: 120,
        fx: 130.0,
        fy: 130.0,
        cx: 79.5,
        cy: 59.5,
    }
}

/// Floor, a large box and a small box resting on top of it.
pub fn stacked_boxes_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        objects: vec![
            ObjectSpec::Plane {
                center: [0.0, 0.0, 0.0],
                normal: Axis::Z,
                size: [2.4, 2.4],
                color: [0.55, 0.55, 0.55],
            },
            ObjectSpec::Box {
                center: [0.0, 0.0, 0.25],
                size: [0.8, 0.6, 0.5],
                color: [0.15, 0.3, 0.85],
            },
            ObjectSpec::Box {
                center: [0.1, 0.05, 0.6],
                size: [0.2, 0.2, 0.2],
                color: [0.85, 0.15, 0.15],
            },
        ],
        room: RoomBounds {
            min: [-1.2, -1.2, -0.1],
            max: [1.2, 1.2, 2.0],
        },
        points_per_m2: 3000.0,
        cameras: CameraSpec {
            intrinsics: Intrinsics::default(),
            orbit: Some(Orbit {
                radius: 2.2,
                height: 1.6,
                count: 8,
                target: [0.0, 0.0, 0.3],
                phase_deg: 15.0,
            }),
            poses: Vec::new(),
        },
        mask_corruption: Default::default(),
        noise: Default::default(),
        seed,
    }
}
