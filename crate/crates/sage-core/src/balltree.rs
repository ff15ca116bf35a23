//! Exact k-nearest-neighbour search over a ball tree.
//!
//! Nodes store a centroid and covering radius; queries use branch-and-bound
//! with the triangle inequality, so results are exact, not approximate. Tree
//! construction and queries are deterministic: every floating-point tie is
//! broken by the lower original point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Result, SageError};

/// Default leaf size for latent-space trees.
pub const DEFAULT_LEAF_SIZE: usize = 40;

/// Mean distances below this are clamped before taking the log, so
/// duplicate-heavy neighbourhoods still yield a finite measure.
pub const LOG_DISTANCE_FLOOR: f64 = 1e-12;

const NO_CHILD: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    center: Array1<f64>,
    radius: f64,
    /// Range into the index permutation covered by this node.
    start: usize,
    end: usize,
    left: usize,
    right: usize,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }
}

/// Ball tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct BallTree {
    points: Array2<f64>,
    indices: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

impl BallTree {
    /// Builds a tree by recursive median splits along the widest dimension.
    pub fn build(points: Array2<f64>, leaf_size: usize) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(SageError::EmptyInput);
        }
        assert!(leaf_size >= 1, "leaf_size must be at least 1");
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(SageError::NonFinite(pos / points.ncols()));
        }
        let mut tree = BallTree {
            indices: (0..points.nrows()).collect(),
            points,
            nodes: Vec::new(),
            leaf_size,
        };
        let n = tree.indices.len();
        tree.split(0, n);
        Ok(tree)
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// The indexed points, row-major, in original order.
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Builds the node covering `indices[start..end]`, returning its id.
    fn split(&mut self, start: usize, end: usize) -> usize {
        let count = end - start;
        let dim = self.dim();
        let mut center = Array1::zeros(dim);
        for &idx in &self.indices[start..end] {
            center += &self.points.index_axis(Axis(0), idx);
        }
        center /= count as f64;
        let radius = self.indices[start..end]
            .iter()
            .map(|&idx| euclidean(self.points.index_axis(Axis(0), idx), center.view()))
            .fold(0.0, f64::max);

        let id = self.nodes.len();
        self.nodes.push(Node {
            center,
            radius,
            start,
            end,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        if count <= self.leaf_size {
            return id;
        }

        // widest spread picks the split dimension; ties go to the lower axis
        let mut split_dim = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for d in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &idx in &self.indices[start..end] {
                let v = self.points[[idx, d]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let spread = hi - lo;
            if spread > best_spread {
                best_spread = spread;
                split_dim = d;
            }
        }
        self.indices[start..end].sort_unstable_by(|&a, &b| {
            self.points[[a, split_dim]]
                .total_cmp(&self.points[[b, split_dim]])
                .then(a.cmp(&b))
        });
        let mid = start + count / 2;
        let left = self.split(start, mid);
        let right = self.split(mid, end);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    /// Exact k nearest neighbours of `query`, ascending by `(distance, index)`.
    ///
    /// Indexed points are eligible as their own neighbours (distance zero).
    pub fn query(&self, query: ArrayView1<f64>, k: usize) -> Result<Vec<(f64, usize)>> {
        if query.len() != self.dim() {
            return Err(SageError::ShapeMismatch(format!(
                "query dim {} != tree dim {}",
                query.len(),
                self.dim()
            )));
        }
        if let Some(pos) = query.iter().position(|v| !v.is_finite()) {
            return Err(SageError::NonFinite(pos));
        }
        if k == 0 || k > self.n_points() {
            return Err(SageError::KTooLarge {
                k,
                n: self.n_points(),
            });
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.dist, c.index)).collect();
        out.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(out)
    }

    fn search(&self, id: usize, query: ArrayView1<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[id];
        let center_dist = euclidean(query, node.center.view());
        if heap.len() == k {
            // nothing inside this ball can beat the current worst
            let bound = (center_dist - node.radius).max(0.0);
            if bound > heap.peek().expect("heap full").dist {
                return;
            }
        }
        if node.is_leaf() {
            for &idx in &self.indices[node.start..node.end] {
                let dist = euclidean(query, self.points.index_axis(Axis(0), idx));
                let cand = Candidate { dist, index: idx };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("heap full") {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        let (l, r) = (node.left, node.right);
        let dl = euclidean(query, self.nodes[l].center.view());
        let dr = euclidean(query, self.nodes[r].center.view());
        // descend into the nearer child first to tighten the bound early
        if dr < dl {
            self.search(r, query, k, heap);
            self.search(l, query, k, heap);
        } else {
            self.search(l, query, k, heap);
            self.search(r, query, k, heap);
        }
    }
}

/// Mean Euclidean distance from `query` to its k nearest indexed points.
pub fn knn_mean_distance(tree: &BallTree, query: ArrayView1<f64>, k: usize) -> Result<f64> {
    let hits = tree.query(query, k)?;
    Ok(hits.iter().map(|&(d, _)| d).sum::<f64>() / k as f64)
}

/// Per-query natural log of the mean kNN distance, floored at
/// [`LOG_DISTANCE_FLOOR`] so the result is always finite.
pub fn log_knn_measure(
    tree: &BallTree,
    queries: &Array2<f64>,
    k: usize,
) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(queries.nrows());
    for (i, q) in queries.rows().into_iter().enumerate() {
        let mean = knn_mean_distance(tree, q, k)?;
        out[i] = mean.max(LOG_DISTANCE_FLOOR).ln();
    }
    Ok(out)
}

/// Reference implementation: linear scan over every point.
///
/// Same contract as [`BallTree::query`]; used as the correctness oracle for
/// the tree.
pub fn brute_force_knn(
    points: &Array2<f64>,
    query: ArrayView1<f64>,
    k: usize,
) -> Result<Vec<(f64, usize)>> {
    if points.nrows() == 0 {
        return Err(SageError::EmptyInput);
    }
    if query.len() != points.ncols() {
        return Err(SageError::ShapeMismatch(format!(
            "query dim {} != point dim {}",
            query.len(),
            points.ncols()
        )));
    }
    if k == 0 || k > points.nrows() {
        return Err(SageError::KTooLarge {
            k,
            n: points.nrows(),
        });
    }
    let mut all: Vec<(f64, usize)> = points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| (euclidean(query, row), i))
        .collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    Ok(all)
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Heap entry ordered worst-first: greater distance, then greater index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
