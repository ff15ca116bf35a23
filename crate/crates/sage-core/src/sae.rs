//! The supervised autoencoder: encoder + decoder + task head trained
//! jointly, with the total loss being the unweighted sum of reconstruction
//! MSE and the task loss (cross-entropy or MSE).

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabeledDataset, NormStats, Targets};
use crate::error::{Result, SageError};
use crate::nn::{
    self, AdamState, Mode, Network,
};

/// What the head predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

/// Encoder, decoder and task head sharing one latent space.
#[derive(Debug, Clone)]
pub struct SaeModel {
    pub encoder: Network,
    pub decoder: Network,
    pub head: Network,
    pub latent_dim: usize,
    pub task: Task,
    /// Softmax temperature; 1 until calibration sets it.
    pub temperature: f64,
    /// Standardization the model expects its inputs to carry.
    pub norm: Option<NormStats>,
}

/// Head output for either task.
pub enum TaskOutput {
    /// Temperature-scaled class probabilities, rows summing to 1.
    Probabilities(Array2<f64>),
    /// Raw regression predictions.
    Values(Array1<f64>),
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop after this many epochs without validation improvement;
    /// `None` always runs all epochs. Best-validation weights are restored
    /// either way.
    pub early_stop_patience: Option<usize>,
    pub latent_dim: usize,
}

impl TrainConfig {
    /// Image-classification defaults: 20 epochs, early stopping patience 3.
    pub fn mnist_default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr: 3e-4,
            seed: 42,
            early_stop_patience: Some(3),
            latent_dim: 2,
        }
    }

    /// Tabular-regression defaults: 100 epochs, no early stop.
    pub fn abalone_default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr: 3e-4,
            seed: 42,
            early_stop_patience: None,
            latent_dim: 1,
        }
    }
}

/// Per-epoch losses. `train_total`/`val_total` are computed as
/// `recon + task` at logging time, so the sum identity is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_recon: f64,
    pub train_task: f64,
    pub train_total: f64,
    pub val_recon: f64,
    pub val_task: f64,
    pub val_total: f64,
}

const LEAKY_SLOPE: f64 = 0.01;
const DROPOUT_P: f64 = 0.2;

/// Builds the encoder/decoder/head stacks for a named preset.
///
/// `mnist`: dense encoder 784→256→64→L, mirrored decoder, classifier
/// L→20→10. `abalone`: encoder 8→64→32→16→L, mirrored decoder, regressor
/// L→32→16→8→1. Leaky ReLU + dropout 0.2 everywhere except final layers.
pub fn build_sae(preset: &str, latent_dim: Option<usize>, seed: u64) -> Result<SaeModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stack = |widths: &[usize], rng: &mut ChaCha8Rng| {
        Network::dense_stack(widths, LEAKY_SLOPE, DROPOUT_P, rng)
    };
    let model = match preset {
        "mnist" => {
            let latent = latent_dim.unwrap_or(2);
            SaeModel {
                encoder: stack(&[784, 256, 64, latent], &mut rng),
                decoder: stack(&[latent, 64, 256, 784], &mut rng),
                head: stack(&[latent, 20, 10], &mut rng),
                latent_dim: latent,
                task: Task::Classification { n_classes: 10 },
                temperature: 1.0,
                norm: None,
            }
        }
        "abalone" => {
            let latent = latent_dim.unwrap_or(1);
            SaeModel {
                encoder: stack(&[8, 64, 32, 16, latent], &mut rng),
                decoder: stack(&[latent, 16, 32, 64, 8], &mut rng),
                head: stack(&[latent, 32, 16, 8, 1], &mut rng),
                latent_dim: latent,
                task: Task::Regression,
                temperature: 1.0,
                norm: None,
            }
        }
        other => return Err(SageError::UnknownPreset(other.to_string())),
    };
    Ok(model)
}

impl SaeModel {
    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Latent coordinates, eval mode.
    pub fn encode(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.encoder.eval(batch)
    }

    /// Reconstruction plus per-sample mean squared error.
    pub fn reconstruct(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        let latent = self.encoder.eval(batch)?;
        let recon = self.decoder.eval(&latent)?;
        let per_sample = nn::mse_per_row(&recon, batch);
        Ok((recon, per_sample))
    }

    /// Raw classification logits (before temperature).
    pub fn logits(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        match self.task {
            Task::Classification { .. } => {
                let latent = self.encoder.eval(batch)?;
                self.head.eval(&latent)
            }
            Task::Regression => Err(SageError::NotClassification),
        }
    }

    /// Temperature-scaled class probabilities.
    pub fn predict_proba(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        let logits = self.logits(batch)?;
        Ok(nn::softmax(&(logits / self.temperature)))
    }

    /// Regression predictions; temperature plays no part here.
    pub fn predict_values(&self, batch: &Array2<f64>) -> Result<Array1<f64>> {
        match self.task {
            Task::Regression => {
                let latent = self.encoder.eval(batch)?;
                let out = self.head.eval(&latent)?;
                Ok(out.index_axis(Axis(1), 0).to_owned())
            }
            Task::Classification { .. } => Err(SageError::NotRegression),
        }
    }

    /// Task prediction for either task kind.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<TaskOutput> {
        match self.task {
            Task::Classification { .. } => Ok(TaskOutput::Probabilities(self.predict_proba(batch)?)),
            Task::Regression => Ok(TaskOutput::Values(self.predict_values(batch)?)),
        }
    }
}

/// Checks that a dataset's targets fit the model's task.
fn check_targets(model: &SaeModel, ds: &LabeledDataset) -> Result<()> {
    if ds.dim() != model.input_dim() {
        return Err(SageError::ShapeMismatch(format!(
            "dataset width {} != model input {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    match (&model.task, &ds.targets) {
        (Task::Classification { n_classes }, Targets::Classes { n_classes: nc, .. })
            if n_classes == nc =>
        {
            Ok(())
        }
        (Task::Regression, Targets::Values(_)) => Ok(()),
        _ => Err(SageError::ShapeMismatch(
            "dataset targets do not match the model task".to_string(),
        )),
    }
}

/// Joint recon + task loss of the current weights on a dataset, eval mode.
fn eval_losses(model: &SaeModel, ds: &LabeledDataset) -> Result<(f64, f64)> {
    let latent = model.encoder.eval(&ds.features)?;
    let recon = model.decoder.eval(&latent)?;
    let recon_loss = nn::mse(&recon, &ds.features)?;
    let out = model.head.eval(&latent)?;
    let task_loss = match &ds.targets {
        Targets::Classes { labels, .. } => nn::cross_entropy(&out, labels)?,
        Targets::Values(values) => {
            let target = values.view().insert_axis(Axis(1)).to_owned();
            nn::mse(&out, &target)?
        }
    };
    Ok((recon_loss, task_loss))
}

/// Trains in place and returns the per-epoch loss history.
///
/// The optimizer is Adam over all three stacks; batches are reshuffled every
/// epoch from one seeded stream, so a fixed seed reproduces the trajectory
/// bit for bit. The weights from the best validation epoch are restored
/// before returning.
pub fn train_sae(
    model: &mut SaeModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    check_targets(model, train)?;
    check_targets(model, val)?;
    assert!(cfg.epochs >= 1, "epochs must be at least 1");
    assert!(cfg.batch_size >= 1, "batch_size must be at least 1");

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam_enc = AdamState::new(&model.encoder, cfg.lr);
    let mut adam_dec = AdamState::new(&model.decoder, cfg.lr);
    let mut adam_head = AdamState::new(&model.head, cfg.lr);

    let n = train.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Network, Network, Network)> = None;
    let mut epochs_since_best = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut recon_sum = 0.0;
        let mut task_sum = 0.0;
        let mut batches = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = train.features.select(Axis(0), chunk);
            let enc_trace = model.encoder.forward_rng(&x, Mode::Train, &mut rng)?;
            let latent = enc_trace.output.clone();
            // a non-finite latent is exploded weights, not bad input data
            if latent.iter().any(|v| !v.is_finite()) {
                return Err(SageError::DivergenceDetected {
                    epoch: epoch + 1,
                    batch: batch_idx + 1,
                });
            }
            let dec_trace = model.decoder.forward_rng(&latent, Mode::Train, &mut rng)?;
            let head_trace = model.head.forward_rng(&latent, Mode::Train, &mut rng)?;

            let recon_loss = nn::mse(&dec_trace.output, &x)?;
            let (task_loss, task_grad) = match &train.targets {
                Targets::Classes { labels, .. } => {
                    let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    (
                        nn::cross_entropy(&head_trace.output, &batch_labels)?,
                        nn::cross_entropy_grad(&head_trace.output, &batch_labels)?,
                    )
                }
                Targets::Values(values) => {
                    let target: Array2<f64> =
                        Array2::from_shape_fn((chunk.len(), 1), |(i, _)| values[chunk[i]]);
                    (
                        nn::mse(&head_trace.output, &target)?,
                        nn::mse_grad(&head_trace.output, &target),
                    )
                }
            };
            let total = recon_loss + task_loss;
            if !total.is_finite() {
                return Err(SageError::DivergenceDetected {
                    epoch: epoch + 1,
                    batch: batch_idx + 1,
                });
            }

            let recon_grad = nn::mse_grad(&dec_trace.output, &x);
            let (dec_grads, latent_grad_dec) = model.decoder.backward(&dec_trace, &recon_grad)?;
            let (head_grads, latent_grad_head) = model.head.backward(&head_trace, &task_grad)?;
            let latent_grad = latent_grad_dec + latent_grad_head;
            let (enc_grads, _) = model.encoder.backward(&enc_trace, &latent_grad)?;

            adam_enc.step(&mut model.encoder, &enc_grads);
            adam_dec.step(&mut model.decoder, &dec_grads);
            adam_head.step(&mut model.head, &head_grads);

            recon_sum += recon_loss;
            task_sum += task_loss;
            batches += 1.0;
        }
        let train_recon = recon_sum / batches;
        let train_task = task_sum / batches;
        let (val_recon, val_task) = eval_losses(model, val)?;
        let val_total = val_recon + val_task;
        history.push(EpochStats {
            epoch: epoch + 1,
            train_recon,
            train_task,
            train_total: train_recon + train_task,
            val_recon,
            val_task,
            val_total,
        });

        let improved = best.as_ref().is_none_or(|(b, ..)| val_total < *b);
        if improved {
            best = Some((
                val_total,
                model.encoder.clone(),
                model.decoder.clone(),
                model.head.clone(),
            ));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if let Some(patience) = cfg.early_stop_patience {
                if epochs_since_best >= patience {
                    break;
                }
            }
        }
    }

    if let Some((_, enc, dec, head)) = best {
        model.encoder = enc;
        model.decoder = dec;
        model.head = head;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitTag;
    use rand::Rng;

    fn tiny_regression(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((n, 8), |_| rng.gen_range(-1.0..1.0));
        let targets = Array1::from_shape_fn(n, |i| features.row(i).sum());
        LabeledDataset {
            features,
            targets: Targets::Values(targets),
            split: SplitTag::Train,
            norm: None,
        }
    }

    fn tiny_classification(n: usize, d: usize, classes: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let features = Array2::from_shape_fn((n, d), |(i, _)| {
            labels[i] as f64 + rng.gen_range(-0.3..0.3)
        });
        LabeledDataset {
            features,
            targets: Targets::Classes {
                labels,
                n_classes: classes,
            },
            split: SplitTag::Train,
            norm: None,
        }
    }

    /// A small classification model compatible with `tiny_classification`.
    fn tiny_model(d: usize, classes: usize, seed: u64) -> SaeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SaeModel {
            encoder: Network::dense_stack(&[d, 16, 2], 0.01, 0.0, &mut rng),
            decoder: Network::dense_stack(&[2, 16, d], 0.01, 0.0, &mut rng),
            head: Network::dense_stack(&[2, 16, classes], 0.01, 0.0, &mut rng),
            latent_dim: 2,
            task: Task::Classification { n_classes: classes },
            temperature: 1.0,
            norm: None,
        }
    }

    #[test]
    fn presets_have_consistent_widths() {
        let m = build_sae("mnist", None, 1).unwrap();
        assert_eq!(m.latent_dim, 2);
        assert_eq!(m.encoder.input_dim(), 784);
        assert_eq!(m.encoder.output_dim(), 2);
        assert_eq!(m.decoder.input_dim(), 2);
        assert_eq!(m.decoder.output_dim(), 784);
        assert_eq!(m.head.input_dim(), 2);
        assert_eq!(m.head.output_dim(), 10);
        assert_eq!(m.task, Task::Classification { n_classes: 10 });

        let a = build_sae("abalone", None, 1).unwrap();
        assert_eq!(a.latent_dim, 1);
        assert_eq!(a.encoder.input_dim(), 8);
        assert_eq!(a.encoder.output_dim(), 1);
        assert_eq!(a.decoder.output_dim(), 8);
        assert_eq!(a.head.output_dim(), 1);
        assert_eq!(a.task, Task::Regression);
        // regressor hidden widths follow the 1→32→16→8→1 reading
        let widths: Vec<usize> = a.head.layers.iter().map(|l| l.output_dim()).collect();
        assert_eq!(widths, vec![32, 16, 8, 1]);
    }

    #[test]
    fn latent_override_propagates() {
        let m = build_sae("mnist", Some(16), 1).unwrap();
        assert_eq!(m.latent_dim, 16);
        assert_eq!(m.encoder.output_dim(), 16);
        assert_eq!(m.decoder.input_dim(), 16);
        assert_eq!(m.head.input_dim(), 16);
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(
            build_sae("cifar", None, 1),
            Err(SageError::UnknownPreset(_))
        ));
    }

    #[test]
    fn loss_history_total_is_exact_sum() {
        let train = tiny_classification(64, 6, 3, 5);
        let val = tiny_classification(16, 6, 3, 6);
        let mut model = tiny_model(6, 3, 7);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 16,
            lr: 1e-3,
            seed: 8,
            early_stop_patience: None,
            latent_dim: 2,
        };
        let history = train_sae(&mut model, &train, &val, &cfg).unwrap();
        assert_eq!(history.len(), 4);
        for row in &history {
            assert_eq!(row.train_total, row.train_recon + row.train_task);
            assert_eq!(row.val_total, row.val_recon + row.val_task);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let train = tiny_regression(48, 1);
        let val = tiny_regression(12, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            lr: 1e-3,
            seed: 9,
            early_stop_patience: None,
            latent_dim: 1,
        };
        let mut m1 = build_sae("abalone", None, 11).unwrap();
        let h1 = train_sae(&mut m1, &train, &val, &cfg).unwrap();
        let mut m2 = build_sae("abalone", None, 11).unwrap();
        let h2 = train_sae(&mut m2, &train, &val, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert!((h1.last().unwrap().val_total - h2.last().unwrap().val_total).abs() < 1e-12);
        for (a, b) in m1.encoder.layers.iter().zip(m2.encoder.layers.iter()) {
            assert_eq!(a.weights, b.weights);
        }
    }

    #[test]
    fn restored_weights_match_best_validation_epoch() {
        let train = tiny_classification(60, 6, 3, 15);
        let val = tiny_classification(20, 6, 3, 16);
        let mut model = tiny_model(6, 3, 17);
        // deliberately noisy lr so validation loss fluctuates
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 8,
            lr: 0.05,
            seed: 18,
            early_stop_patience: None,
            latent_dim: 2,
        };
        let history = train_sae(&mut model, &train, &val, &cfg).unwrap();
        let best = history
            .iter()
            .map(|e| e.val_total)
            .fold(f64::INFINITY, f64::min);
        let (r, t) = eval_losses(&model, &val).unwrap();
        assert!(
            (r + t - best).abs() < 1e-12,
            "returned weights (val {}) are not the best epoch ({best})",
            r + t
        );
    }

    #[test]
    fn early_stopping_can_end_before_epoch_budget() {
        let train = tiny_classification(60, 6, 3, 25);
        let val = tiny_classification(20, 6, 3, 26);
        let mut model = tiny_model(6, 3, 27);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            lr: 0.1, // noisy: validation loss will fluctuate early
            seed: 28,
            early_stop_patience: Some(2),
            latent_dim: 2,
        };
        let history = train_sae(&mut model, &train, &val, &cfg).unwrap();
        assert!(history.len() <= 40);
        if history.len() < 40 {
            // stopped: the last `patience` epochs did not improve on the best
            let best = history
                .iter()
                .map(|e| e.val_total)
                .fold(f64::INFINITY, f64::min);
            let tail = &history[history.len() - 2..];
            assert!(tail.iter().all(|e| e.val_total > best));
        }
    }

    #[test]
    fn divergence_is_detected() {
        let train = tiny_regression(16, 31);
        let val = tiny_regression(8, 32);
        let mut model = build_sae("abalone", None, 33).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            lr: 1e155,
            seed: 34,
            early_stop_patience: None,
            latent_dim: 1,
        };
        assert!(matches!(
            train_sae(&mut model, &train, &val, &cfg),
            Err(SageError::DivergenceDetected { .. })
        ));
    }

    #[test]
    fn encode_has_no_batch_coupling() {
        let model = tiny_model(6, 3, 41);
        let batch = tiny_classification(10, 6, 3, 42).features;
        let full = model.encode(&batch).unwrap();
        for i in 0..10 {
            let single = model
                .encode(&batch.select(Axis(0), &[i]))
                .unwrap();
            for (a, b) in single.row(0).iter().zip(full.row(i).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // determinism
        assert_eq!(model.encode(&batch).unwrap(), full);
    }

    #[test]
    fn per_sample_reconstruction_errors_average_to_batch_mse() {
        let model = tiny_model(6, 3, 51);
        let batch = tiny_classification(12, 6, 3, 52).features;
        let (recon, per_sample) = model.reconstruct(&batch).unwrap();
        let batch_mse = nn::mse(&recon, &batch).unwrap();
        assert!((per_sample.mean().unwrap() - batch_mse).abs() < 1e-12);
        // identical rows get identical errors
        let mut dup = batch.clone();
        let row0 = dup.row(0).to_owned();
        dup.row_mut(1).assign(&row0);
        let (_, errs) = model.reconstruct(&dup).unwrap();
        assert_eq!(errs[0], errs[1]);
    }

    #[test]
    fn temperature_one_is_plain_softmax_and_argmax_invariant() {
        let mut model = tiny_model(6, 3, 61);
        let batch = tiny_classification(9, 6, 3, 62).features;
        let logits = model.logits(&batch).unwrap();
        let proba = model.predict_proba(&batch).unwrap();
        assert_eq!(proba, nn::softmax(&logits));
        for row in proba.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let argmax = |m: &Array2<f64>| -> Vec<usize> {
            m.rows()
                .into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .unwrap()
                        .0
                })
                .collect()
        };
        let base = argmax(&proba);
        for t in [0.05, 0.5, 3.0, 20.0] {
            model.temperature = t;
            assert_eq!(argmax(&model.predict_proba(&batch).unwrap()), base);
        }
    }

    #[test]
    fn regression_predictions_ignore_temperature() {
        let mut model = build_sae("abalone", None, 71).unwrap();
        let batch = tiny_regression(5, 72).features;
        let a = model.predict_values(&batch).unwrap();
        model.temperature = 7.5;
        let b = model.predict_values(&batch).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            model.logits(&batch),
            Err(SageError::NotClassification)
        ));
        let c = tiny_model(6, 3, 73);
        assert!(matches!(
            c.predict_values(&Array2::zeros((1, 6))),
            Err(SageError::NotRegression)
        ));
    }

    #[test]
    fn mismatched_targets_rejected() {
        let mut model = tiny_model(6, 3, 81);
        let train = tiny_regression(16, 82); // wrong width and wrong task
        let val = tiny_regression(8, 83);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            lr: 1e-3,
            seed: 84,
            early_stop_patience: None,
            latent_dim: 2,
        };
        assert!(matches!(
            train_sae(&mut model, &train, &val, &cfg),
            Err(SageError::ShapeMismatch(_))
        ));
    }
}
