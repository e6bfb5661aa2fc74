//! Exact k-nearest-neighbor search over a static point set.
//!
//! Results are ordered by ascending squared Euclidean distance with ties
//! broken by ascending point index, so they match an exhaustive sort exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::cloud::Vec3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable k-d tree over a borrowed slice of positions.
#[derive(Debug)]
pub struct NeighborIndex<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub(crate) fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl<'a> NeighborIndex<'a> {
    pub fn build(points: &'a [Vec3]) -> Self {
        let mut index = NeighborIndex {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [Vec3] {
        self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the axis of largest spread.
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let spread = hi - lo;
        let axis = spread.imax();
        if spread[axis] <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let value = points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest neighbors of point `query`, excluding itself.
    ///
    /// Returns `min(k, N - 1)` indices.
    pub fn knn(&self, query: usize, k: usize) -> Result<Vec<usize>> {
        if query >= self.points.len() {
            return Err(Error::Invalid(format!(
                "query id {query} out of range for {} points",
                self.points.len()
            )));
        }
        Ok(self.knn_point(&self.points[query], k, Some(query)))
    }

    /// The `k` nearest points to an arbitrary location, optionally skipping one index.
    pub fn knn_point(&self, at: &Vec3, k: usize, exclude: Option<usize>) -> Vec<usize> {
        let k = k.min(self.points.len() - usize::from(exclude.is_some()));
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, at, k, exclude, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        found.into_iter().map(|c| c.index).collect()
    }

    fn search(
        &self,
        node: usize,
        at: &Vec3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let c = Candidate {
                        dist2: dist2(at, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = at[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, at, k, exclude, heap);
                // Equal-distance points may still win on index, so only prune strictly.
                let worst = heap.peek().map(|c| c.dist2);
                if heap.len() < k || worst.is_some_and(|w| delta * delta <= w) {
                    self.search(far, at, k, exclude, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..points.len())
            .filter(|&i| i != q)
            .map(|i| {
                let d = points[i] - points[q];
                (d.x * d.x + d.y * d.y + d.z * d.z, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn collinear_points() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        ];
        let index = NeighborIndex::build(&pts);
        assert_eq!(index.knn(0, 2).unwrap(), vec![1, 2]);
        assert_eq!(index.knn(1, 1).unwrap(), vec![0]);
        assert_eq!(index.knn(0, 10).unwrap().len(), 2);
        assert!(index.knn(3, 1).is_err());
    }

    #[test]
    fn uniform_cloud_matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let index = NeighborIndex::build(&pts);
        for q in 0..pts.len() {
            assert_eq!(index.knn(q, 16).unwrap(), brute(&pts, q, 16), "query {q}");
        }
    }

    #[test]
    fn ties_break_by_index_on_a_lattice() {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..3 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let index = NeighborIndex::build(&pts);
        for q in 0..pts.len() {
            for k in [1, 4, 7, 20] {
                assert_eq!(index.knn(q, k).unwrap(), brute(&pts, q, k));
            }
        }
    }

    #[test]
    fn coincident_points() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 40];
        let index = NeighborIndex::build(&pts);
        assert_eq!(index.knn(5, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(index.knn(0, 3).unwrap(), vec![1, 2, 3]);
    }
}
