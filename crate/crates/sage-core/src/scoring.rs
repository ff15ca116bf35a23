//! SAGE scoring: three per-sample distribution-shift measures, empirical
//! CCDF exceedance probabilities against the training set, and their
//! geometric-mean ensemble.
//!
//! All three measures point the same way — higher means further out of
//! distribution — and scoring never looks at labels.

use ndarray::{Array1, Array2};

use crate::balltree::{log_knn_measure, BallTree, DEFAULT_LEAF_SIZE};
use crate::error::{Result, SageError};
use crate::sae::{SaeModel, Task};

/// Per-sample measure columns, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Measures {
    /// Log mean distance to the k nearest training points in latent space.
    pub m_knn: Array1<f64>,
    /// Per-sample reconstruction MSE.
    pub m_recon: Array1<f64>,
    /// Task uncertainty: classification, negative log calibrated max-softmax
    /// confidence; regression, |prediction − training median prediction|.
    pub m_task: Array1<f64>,
}

impl Measures {
    pub fn len(&self) -> usize {
        self.m_knn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_knn.is_empty()
    }
}

/// Empirical training distributions the exceedance probabilities are read
/// from, plus everything needed to rebuild the latent tree on load.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReference {
    pub sorted_knn: Vec<f64>,
    pub sorted_recon: Vec<f64>,
    pub sorted_task: Vec<f64>,
    /// Training-set size backing each sorted array.
    pub n: usize,
    /// Neighbour count used for the kNN measure.
    pub k: usize,
    /// Training latent coordinates; the ball tree is rebuilt from these.
    pub latent_reference: Array2<f64>,
    /// Median training prediction (regression task only).
    pub regression_center: Option<f64>,
}

impl ScoreReference {
    /// Sorts the given training measures into a reference.
    pub fn from_measures(
        measures: &Measures,
        latent_reference: Array2<f64>,
        k: usize,
        regression_center: Option<f64>,
    ) -> Result<Self> {
        let n = measures.len();
        if n == 0 {
            return Err(SageError::EmptyTrain);
        }
        let sorted = |a: &Array1<f64>| -> Vec<f64> {
            let mut v = a.to_vec();
            v.sort_unstable_by(f64::total_cmp);
            v
        };
        Ok(ScoreReference {
            sorted_knn: sorted(&measures.m_knn),
            sorted_recon: sorted(&measures.m_recon),
            sorted_task: sorted(&measures.m_task),
            n,
            k,
            latent_reference,
            regression_center,
        })
    }

    /// Rebuilds the latent-space tree from the stored coordinates.
    pub fn rebuild_tree(&self) -> Result<BallTree> {
        BallTree::build(self.latent_reference.clone(), DEFAULT_LEAF_SIZE)
    }
}

/// Component exceedance probabilities and their geometric mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SageScore {
    pub p_knn: f64,
    pub p_recon: f64,
    pub p_task: f64,
    /// `(p_knn · p_recon · p_task)^(1/3)`, in `[0, 1]`.
    pub score: f64,
}

/// Fraction of sorted training values at least as large as `v`.
///
/// Ties count as exceeding, so a value equal to a training value never gets
/// probability zero. Computed by binary search.
pub fn exceedance(sorted_train: &[f64], v: f64) -> f64 {
    debug_assert!(!sorted_train.is_empty());
    let below = sorted_train.partition_point(|&s| s < v);
    (sorted_train.len() - below) as f64 / sorted_train.len() as f64
}

/// Combines one sample's measures into its score.
pub fn sage_score(reference: &ScoreReference, m_knn: f64, m_recon: f64, m_task: f64) -> SageScore {
    let p_knn = exceedance(&reference.sorted_knn, m_knn);
    let p_recon = exceedance(&reference.sorted_recon, m_recon);
    let p_task = exceedance(&reference.sorted_task, m_task);
    // geometric mean in log space; zero annihilates
    let score = if p_knn == 0.0 || p_recon == 0.0 || p_task == 0.0 {
        0.0
    } else {
        ((p_knn.ln() + p_recon.ln() + p_task.ln()) / 3.0).exp()
    };
    SageScore {
        p_knn,
        p_recon,
        p_task,
        score,
    }
}

/// Median of the model's predictions over the training features; the center
/// that regression task-uncertainty is measured from.
pub fn regression_center(model: &SaeModel, train_features: &Array2<f64>) -> Result<f64> {
    let mut preds = model.predict_values(train_features)?.to_vec();
    if preds.is_empty() {
        return Err(SageError::EmptyTrain);
    }
    preds.sort_unstable_by(f64::total_cmp);
    let n = preds.len();
    Ok(if n % 2 == 1 {
        preds[n / 2]
    } else {
        (preds[n / 2 - 1] + preds[n / 2]) / 2.0
    })
}

/// Computes the three measures for a batch. Labels are never consulted.
///
/// `task_center` is the training prediction median and is required for (and
/// only read by) regression models.
pub fn compute_measures(
    model: &SaeModel,
    tree: &BallTree,
    k: usize,
    batch: &Array2<f64>,
    task_center: Option<f64>,
) -> Result<Measures> {
    let latent = model.encode(batch)?;
    let m_knn = log_knn_measure(tree, &latent, k)?;
    let (_, m_recon) = model.reconstruct(batch)?;
    let m_task = match model.task {
        Task::Classification { .. } => {
            let proba = model.predict_proba(batch)?;
            Array1::from_shape_fn(proba.nrows(), |i| {
                let conf = proba
                    .row(i)
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                -conf.ln()
            })
        }
        Task::Regression => {
            let center = task_center.ok_or(SageError::ShapeMismatch(
                "regression scoring needs the training prediction median".to_string(),
            ))?;
            let preds = model.predict_values(batch)?;
            preds.mapv(|p| (p - center).abs())
        }
    };
    Ok(Measures {
        m_knn,
        m_recon,
        m_task,
    })
}

/// Builds the score reference from the training features: embeds them,
/// measures them against themselves (self-matches included), and sorts.
pub fn build_reference(
    model: &SaeModel,
    train_features: &Array2<f64>,
    k: usize,
) -> Result<ScoreReference> {
    if train_features.nrows() == 0 {
        return Err(SageError::EmptyTrain);
    }
    let latent = model.encode(train_features)?;
    let tree = BallTree::build(latent.clone(), DEFAULT_LEAF_SIZE)?;
    let center = match model.task {
        Task::Regression => Some(regression_center(model, train_features)?),
        Task::Classification { .. } => None,
    };
    let measures = compute_measures(model, &tree, k, train_features, center)?;
    ScoreReference::from_measures(&measures, latent, k, center)
}

/// Measures and scores a batch against a built reference.
pub fn score_batch(
    model: &SaeModel,
    tree: &BallTree,
    reference: &ScoreReference,
    batch: &Array2<f64>,
) -> Result<(Measures, Vec<SageScore>)> {
    let measures = compute_measures(model, tree, reference.k, batch, reference.regression_center)?;
    let scores = (0..measures.len())
        .map(|i| {
            sage_score(
                reference,
                measures.m_knn[i],
                measures.m_recon[i],
                measures.m_task[i],
            )
        })
        .collect();
    Ok((measures, scores))
}
