//! Superpoint over-segmentation.
//!
//! Points become nodes of a k-NN graph whose edge weights combine normal
//! and color dissimilarity; the graph is then cut with the Felzenszwalb
//! Huttenlocher merge criterion.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, NeighborIndex, PointCloud, Vec3, DEFAULT_NORMAL_K};
use crate::partition::Partition;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveConfig {
    pub w_n: f64,
    pub w_c: f64,
    /// Scale of the merge threshold `k / |C|`.
    pub fzs_k: f64,
    pub min_segment_size: usize,
    pub graph_knn: usize,
    /// Neighborhood size used when normals must be estimated.
    pub normal_knn: usize,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        PrimitiveConfig {
            w_n: 0.96,
            w_c: 0.04,
            fzs_k: 0.06,
            min_segment_size: 20,
            graph_knn: 8,
            normal_knn: DEFAULT_NORMAL_K,
        }
    }
}

impl PrimitiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_n >= 0.0 && self.w_c >= 0.0 && self.w_n + self.w_c > 0.0) {
            return Err(Error::Config(format!(
                "w_n and w_c must be >= 0 with a positive sum (got {}, {})",
                self.w_n, self.w_c
            )));
        }
        if !(self.fzs_k > 0.0 && self.fzs_k.is_finite()) {
            return Err(Error::Config(format!("fzs_k must be > 0 (got {})", self.fzs_k)));
        }
        if self.min_segment_size < 1 {
            return Err(Error::Config("min_segment_size must be >= 1".into()));
        }
        if self.graph_knn < 1 {
            return Err(Error::Config("graph_knn must be >= 1".into()));
        }
        if self.normal_knn < 3 {
            return Err(Error::Config("knn_k must be >= 3".into()));
        }
        Ok(())
    }
}

/// Undirected weighted edge with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    fn order(&self, other: &Edge) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// Dissimilarity between two points: `w_n (1 - cos) / 2 + w_c |dc| / sqrt(3)`.
///
/// Both terms lie in `[0, 1]` for unit normals and `[0,1]` colors.
pub fn edge_weight(n_a: &Vec3, n_b: &Vec3, c_a: &Vec3, c_b: &Vec3, cfg: &PrimitiveConfig) -> f64 {
    let cos = n_a.dot(n_b).clamp(-1.0, 1.0);
    let normal_term = (1.0 - cos) / 2.0;
    let color_term = (c_a - c_b).norm() / SQRT_3;
    cfg.w_n * normal_term + cfg.w_c * color_term
}

/// k-NN graph over the cloud, deduplicated and sorted by `(weight, a, b)`.
pub fn build_primitive_graph(cloud: &PointCloud, cfg: &PrimitiveConfig) -> Result<Vec<Edge>> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::Invalid("primitive graph needs normals".into()))?;
    let index = NeighborIndex::build(&cloud.positions);
    let mut pairs: Vec<(usize, usize)> = (0..cloud.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            index
                .knn_point(&cloud.positions[i], cfg.graph_knn, Some(i))
                .into_iter()
                .map(move |j| (i.min(j), i.max(j)))
        })
        .collect();
    pairs.par_sort_unstable();
    pairs.dedup();
    let mut edges: Vec<Edge> = pairs
        .into_par_iter()
        .map(|(a, b)| Edge {
            a,
            b,
            weight: edge_weight(&normals[a], &normals[b], &cloud.colors[a], &cloud.colors[b], cfg),
        })
        .collect();
    edges.par_sort_unstable_by(Edge::order);
    Ok(edges)
}

struct Forest {
    parent: Vec<usize>,
    size: Vec<usize>,
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn join(&mut self, a: usize, b: usize, weight: f64) {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = weight.max(self.internal[a]).max(self.internal[b]);
    }
}

/// Graph-based segmentation of `n` nodes over `edges` (already sorted).
pub fn segment_graph(edges: &[Edge], n: usize, cfg: &PrimitiveConfig) -> Result<Partition> {
    if n == 0 {
        return Err(Error::Invalid("cannot segment an empty graph".into()));
    }
    if let Some(i) = edges.windows(2).position(|w| w[0].order(&w[1]) == Ordering::Greater) {
        return Err(Error::Invalid(format!("edge list is not sorted at position {}", i + 1)));
    }
    if let Some(e) = edges.iter().find(|e| e.a >= n || e.b >= n || !e.weight.is_finite()) {
        return Err(Error::Invalid(format!("bad edge ({}, {}, {})", e.a, e.b, e.weight)));
    }

    let mut forest = Forest::new(n);
    for e in edges {
        let ra = forest.find(e.a);
        let rb = forest.find(e.b);
        if ra == rb {
            continue;
        }
        let limit_a = forest.internal[ra] + cfg.fzs_k / forest.size[ra] as f64;
        let limit_b = forest.internal[rb] + cfg.fzs_k / forest.size[rb] as f64;
        if e.weight <= limit_a.min(limit_b) {
            forest.join(ra, rb, e.weight);
        }
    }
    if cfg.min_segment_size > 1 {
        for e in edges {
            let ra = forest.find(e.a);
            let rb = forest.find(e.b);
            if ra != rb
                && (forest.size[ra] < cfg.min_segment_size || forest.size[rb] < cfg.min_segment_size)
            {
                forest.join(ra, rb, e.weight);
            }
        }
    }
    let roots: Vec<i64> = (0..n).map(|i| forest.find(i) as i64).collect();
    Ok(Partition::renumbered(&roots))
}

/// Over-segment a cloud into superpoints; normals are estimated if absent.
pub fn compute_primitives(cloud: &PointCloud, cfg: &PrimitiveConfig) -> Result<Partition> {
    cfg.validate()?;
    let with_normals;
    let cloud = if cloud.has_normals() {
        cloud
    } else {
        with_normals = estimate_normals(cloud, cfg.normal_knn)?;
        &with_normals
    };
    let edges = build_primitive_graph(cloud, cfg)?;
    segment_graph(&edges, cloud.len(), cfg)
}
