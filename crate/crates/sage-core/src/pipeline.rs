//! High-level orchestration: fit normalization, train the companion model,
//! calibrate its classifier head, build the score reference, and score raw
//! feature batches against it.

use ndarray::Array2;

use crate::balltree::BallTree;
use crate::calibration::{fit_temperature, CalibrationResult};
use crate::dataset::{apply_norm, fit_norm_stats, image_norm_stats, normalize, LabeledDataset};
use crate::error::{Result, SageError};
use crate::sae::{build_sae, train_sae, EpochStats, SaeModel, Task, TrainConfig};
use crate::scoring::{build_reference, score_batch, Measures, SageScore, ScoreReference};

/// Neighbour count used for the latent-distance measure, per preset:
/// 100 for the image task, 20 for the tabular task.
pub fn default_k(preset: &str) -> Result<usize> {
    match preset {
        "mnist" => Ok(100),
        "abalone" => Ok(20),
        other => Err(SageError::UnknownPreset(other.to_string())),
    }
}

/// Everything `train_companion` produces: the model carries its
/// normalization stats and fitted temperature, so the bundle is
/// self-contained.
#[derive(Debug, Clone)]
pub struct TrainedCompanion {
    pub model: SaeModel,
    pub reference: ScoreReference,
    pub history: Vec<EpochStats>,
    /// Present for classification presets only.
    pub calibration: Option<CalibrationResult>,
}

/// Trains a companion model end to end on raw-unit datasets.
///
/// Fits normalization (fixed image constants for `mnist`, train-derived
/// per-column stats otherwise), trains on the normalized features with
/// `val` driving early stopping, temperature-calibrates classification
/// heads on the same validation split, and builds the score reference from
/// the training set (k nearest latent neighbours, self-matches included).
pub fn train_companion(
    preset: &str,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
    k: usize,
) -> Result<TrainedCompanion> {
    let mut model = build_sae(preset, Some(cfg.latent_dim), cfg.seed)?;
    let stats = match preset {
        "mnist" => image_norm_stats(train.dim()),
        _ => fit_norm_stats(&train.features),
    };
    let train_norm = normalize(train, &stats)?;
    let val_norm = normalize(val, &stats)?;
    let history = train_sae(&mut model, &train_norm, &val_norm, cfg)?;
    model.norm = Some(stats);
    let calibration = match model.task {
        Task::Classification { .. } => Some(fit_temperature(&mut model, &val_norm)?),
        Task::Regression => None,
    };
    let reference = build_reference(&model, &train_norm.features, k)?;
    Ok(TrainedCompanion {
        model,
        reference,
        history,
        calibration,
    })
}

/// A loaded companion ready to score raw features: owns the rebuilt latent
/// tree and applies the model's normalization before measuring.
#[derive(Debug)]
pub struct Scorer {
    pub model: SaeModel,
    pub tree: BallTree,
    pub reference: ScoreReference,
}

impl Scorer {
    pub fn new(model: SaeModel, reference: ScoreReference) -> Result<Scorer> {
        let tree = reference.rebuild_tree()?;
        Ok(Scorer {
            model,
            tree,
            reference,
        })
    }

    /// Scores a batch given in raw units (pixels in [0,1], tabular columns
    /// as parsed); normalization is applied internally.
    pub fn score_raw(&self, raw: &Array2<f64>) -> Result<(Measures, Vec<SageScore>)> {
        let normalized = match &self.model.norm {
            Some(stats) => apply_norm(raw, stats)?,
            None => raw.clone(),
        };
        score_batch(&self.model, &self.tree, &self.reference, &normalized)
    }
}
