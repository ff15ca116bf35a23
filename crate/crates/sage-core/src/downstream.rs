//! Downstream models whose out-of-the-box performance is measured under
//! score filtering: a from-scratch random forest regressor for the tabular
//! task and a dense classifier (trained independently of the companion
//! model) for the image task.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SageError};
use crate::nn::{self, AdamState, Mode, Network};

/// One node of a regression tree, stored in pre-order.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left, the rest go right.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// A CART-style regression tree over a flat pre-order node list.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Longest root-to-leaf path, counted in split edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Forest hyperparameters. The defaults mirror the best tabular settings:
/// 50 estimators, depth 15, 2 candidate features per split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_features: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 50,
            max_depth: 15,
            max_features: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    pub seed: u64,
}

/// Sum of squared deviations from the mean, computed from running sums.
fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq - sum * sum / n).max(0.0)
}

struct TreeBuilder<'a> {
    features: ArrayView2<'a, f64>,
    targets: ArrayView1<'a, f64>,
    max_depth: usize,
    max_features: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    /// Summed child SSE for a split, accumulated in stored row order (two
    /// passes per side: mean, then squared deviations).
    fn canonical_split_score(&self, rows: &[usize], feature: usize, threshold: f64) -> f64 {
        let mut side_sse = [0.0; 2];
        for (side, slot) in side_sse.iter_mut().enumerate() {
            let part = rows
                .iter()
                .filter(|&&r| (self.features[(r, feature)] <= threshold) == (side == 0));
            let (sum, count) = part
                .clone()
                .fold((0.0, 0usize), |(s, c), &r| (s + self.targets[r], c + 1));
            let mean = sum / count as f64;
            *slot = part.map(|&r| (self.targets[r] - mean).powi(2)).sum();
        }
        side_sse[0] + side_sse[1]
    }

    /// Builds the subtree over `rows` and returns its root node index.
    /// `rows` is reordered in place as splits partition it.
    fn build(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.targets[r]).sum::<f64>() / n as f64;
        let pure = rows.iter().all(|&r| self.targets[r] == self.targets[rows[0]]);
        if depth >= self.max_depth || n < 2 || pure {
            self.nodes.push(TreeNode::Leaf { value: mean });
            return self.nodes.len() - 1;
        }

        let d = self.features.ncols();
        let candidates = sample(rng, d, self.max_features.min(d)).into_vec();
        // best = (weighted child SSE, feature, threshold); ties resolved
        // toward the lower feature index, then the lower threshold
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for &feature in &candidates {
            order.clear();
            order.extend_from_slice(rows);
            order.sort_unstable_by(|&a, &b| {
                self.features[(a, feature)].total_cmp(&self.features[(b, feature)])
            });
            let total_sum: f64 = order.iter().map(|&r| self.targets[r]).sum();
            let total_sq: f64 = order.iter().map(|&r| self.targets[r].powi(2)).sum();
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            // prefix scan locates this feature's best boundary cheaply
            let mut feature_best: Option<(f64, f64)> = None;
            for i in 0..n - 1 {
                let y = self.targets[order[i]];
                left_sum += y;
                left_sq += y * y;
                let lo = self.features[(order[i], feature)];
                let hi = self.features[(order[i + 1], feature)];
                if lo == hi {
                    continue; // no boundary between equal values
                }
                let threshold = (lo + hi) / 2.0;
                let score = sse(left_sum, left_sq, (i + 1) as f64)
                    + sse(total_sum - left_sum, total_sq - left_sq, (n - i - 1) as f64);
                if feature_best.is_none_or(|(s, _)| score < s) {
                    feature_best = Some((score, threshold));
                }
            }
            let Some((_, threshold)) = feature_best else {
                continue;
            };
            // rescore canonically — summing in stored row order — so that
            // two features inducing the same partition tie exactly and the
            // (feature, threshold) rule decides, not summation noise
            let score = self.canonical_split_score(rows, feature, threshold);
            let better = match best {
                None => true,
                Some((s, f, t)) => score < s || (score == s && (feature, threshold) < (f, t)),
            };
            if better {
                best = Some((score, feature, threshold));
            }
        }

        let Some((_, feature, threshold)) = best else {
            // every candidate feature is constant over these rows
            self.nodes.push(TreeNode::Leaf { value: mean });
            return self.nodes.len() - 1;
        };

        let split_at = partition_rows(rows, |r| self.features[(r, feature)] <= threshold);
        self.nodes.push(TreeNode::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let at = self.nodes.len() - 1;
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        let TreeNode::Split {
            left: l, right: r, ..
        } = &mut self.nodes[at]
        else {
            unreachable!()
        };
        *l = left;
        *r = right;
        at
    }
}

/// Stable partition: rows satisfying `pred` first, preserving relative
/// order; returns the boundary index.
fn partition_rows(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

fn fit_tree<'a>(
    features: ArrayView2<'a, f64>,
    targets: ArrayView1<'a, f64>,
    params: &ForestParams,
    seed: u64,
) -> RegressionTree {
    let n = features.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut builder = TreeBuilder {
        features,
        targets,
        max_depth: params.max_depth,
        max_features: params.max_features,
        nodes: Vec::new(),
    };
    builder.build(&mut rows, 0, &mut rng);
    RegressionTree {
        nodes: builder.nodes,
    }
}

/// Fits a forest of regression trees on `(features, targets)`.
///
/// Each tree sees its own bootstrap sample (n draws with replacement, unless
/// disabled) and considers `max_features` randomly-drawn candidate features
/// at every split, choosing the midpoint threshold that minimizes the
/// summed child variance. Nodes stop splitting at `max_depth`, purity, or
/// fewer than two samples.
pub fn train_forest(
    features: &Array2<f64>,
    targets: &Array1<f64>,
    params: ForestParams,
    seed: u64,
) -> Result<RandomForest> {
    if features.nrows() == 0 {
        return Err(SageError::EmptyTrain);
    }
    assert_eq!(features.nrows(), targets.len());
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..params.n_estimators).map(|_| master.gen()).collect();
    let trees = tree_seeds
        .iter()
        .map(|&s| fit_tree(features.view(), targets.view(), &params, s))
        .collect();
    Ok(RandomForest { trees, params, seed })
}

/// Mean over per-tree predictions, row by row.
pub fn predict_forest(forest: &RandomForest, rows: &Array2<f64>) -> Array1<f64> {
    Array1::from_shape_fn(rows.nrows(), |i| {
        let row = rows.row(i);
        forest
            .trees
            .iter()
            .map(|t| t.predict_row(row))
            .sum::<f64>()
            / forest.trees.len() as f64
    })
}

/// Configuration for the image-task classifier trained separately from the
/// companion model (different architecture and seed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 12,
            batch_size: 64,
            lr: 3e-4,
            seed: 4242,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IndependentClassifier {
    pub net: Network,
    pub n_classes: usize,
}

impl IndependentClassifier {
    pub fn predict_proba(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(nn::softmax(&self.net.eval(batch)?))
    }

    pub fn predict(&self, batch: &Array2<f64>) -> Result<Vec<usize>> {
        let proba = self.predict_proba(batch)?;
        Ok((0..proba.nrows())
            .map(|i| {
                let row = proba.row(i);
                (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .unwrap()
            })
            .collect())
    }

    pub fn accuracy(&self, batch: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        let preds = self.predict(batch)?;
        let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Trains a dense softmax classifier on `(features, labels)` with plain
/// cross-entropy. `widths` runs input → hidden… → n_classes; the image
/// default is 784→128→128→10.
pub fn train_independent_classifier(
    features: &Array2<f64>,
    labels: &[usize],
    widths: &[usize],
    cfg: &ClassifierConfig,
) -> Result<IndependentClassifier> {
    let n = features.nrows();
    assert_eq!(n, labels.len());
    let n_classes = *widths.last().expect("widths must be non-empty");
    for &l in labels {
        if l >= n_classes {
            return Err(SageError::LabelOutOfRange {
                label: l,
                classes: n_classes,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::dense_stack(widths, 0.01, 0.0, &mut rng);
    let mut adam = AdamState::new(&net, cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Array2::from_shape_fn((chunk.len(), features.ncols()), |(i, j)| {
                features[(chunk[i], j)]
            });
            let batch_labels: Vec<usize> = chunk.iter().map(|&r| labels[r]).collect();
            let trace = net.forward_rng(&batch, Mode::Train, &mut rng)?;
            let loss = nn::cross_entropy(&trace.output, &batch_labels)?;
            if !loss.is_finite() {
                return Err(SageError::DivergenceDetected {
                    epoch: epoch + 1,
                    batch: batch_idx + 1,
                });
            }
            let grad = nn::cross_entropy_grad(&trace.output, &batch_labels)?;
            let (grads, _) = net.backward(&trace, &grad)?;
            adam.step(&mut net, &grads);
        }
    }
    Ok(IndependentClassifier { net, n_classes })
}
