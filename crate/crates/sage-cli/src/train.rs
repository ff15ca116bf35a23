//! The `train`, `train-downstream` and `sweep-latent` commands.

use std::fmt::Write as _;

use sage_core::artifact;
use sage_core::dataset::{apply_norm, image_norm_stats, LabeledDataset};
use sage_core::downstream::{
    train_forest, train_independent_classifier, ClassifierConfig, ForestParams,
};
use sage_core::evaluation::rmse;
use sage_core::pipeline::{train_companion, Scorer, TrainedCompanion};
use sage_core::sae::{EpochStats, TrainConfig};
use sage_core::synth::N_CLASSES;

use crate::config::RunConfig;
use crate::data::{load_split, pipeline_err, write_output};
use crate::CliError;

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed,
        early_stop_patience: cfg.patience(),
        latent_dim: cfg.latent_dim,
    }
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from(
        "epoch,train_recon,train_task,train_total,val_recon,val_task,val_total\n",
    );
    for e in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.epoch, e.train_recon, e.train_task, e.train_total, e.val_recon, e.val_task,
            e.val_total
        );
    }
    out
}

/// Trains the companion model and writes its self-contained artifact plus
/// a per-epoch loss log.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, _test, val) = load_split(cfg)?;
    println!(
        "training companion on {} samples ({} validation), latent_dim={}, k={}",
        train.n(),
        val.n(),
        cfg.latent_dim,
        cfg.k
    );
    let companion = train_companion(&cfg.preset, &train, &val, &train_config(cfg), cfg.k)
        .map_err(pipeline_err)?;
    for e in &companion.history {
        println!(
            "epoch {:>3}  train total {:.6} (recon {:.6} task {:.6})  val total {:.6}",
            e.epoch, e.train_total, e.train_recon, e.train_task, e.val_total
        );
    }
    if let Some(cal) = &companion.calibration {
        println!(
            "calibration: T={:.4}, validation NLL {:.6} -> {:.6}",
            cal.temperature, cal.nll_before, cal.nll_after
        );
    } else {
        println!("calibration: skipped (regression head)");
    }

    write_output(&cfg.train_log_path(), history_csv(&companion.history).as_bytes())?;
    let mut bytes = Vec::new();
    artifact::write_companion(&mut bytes, &companion.model, &companion.reference)
        .map_err(pipeline_err)?;
    write_output(&cfg.companion_path(), &bytes)?;
    println!("wrote {}", cfg.companion_path().display());
    println!("wrote {}", cfg.train_log_path().display());
    Ok(())
}

/// Trains the separate downstream model the filter is meant to protect:
/// a softmax classifier for images (trained on normalized pixels), a
/// random-forest regressor for tabular data (raw units; trees are
/// scale-free).
pub fn cmd_train_downstream(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, test, _val) = load_split(cfg)?;
    let mut bytes = Vec::new();
    if cfg.is_classification() {
        let stats = image_norm_stats(train.dim());
        let features = apply_norm(&train.features, &stats).map_err(pipeline_err)?;
        let labels = train.labels().expect("image preset is classification");
        let mut widths = vec![train.dim()];
        widths.extend_from_slice(&cfg.classifier_hidden);
        widths.push(N_CLASSES);
        let clf_cfg = ClassifierConfig {
            epochs: cfg.classifier_epochs,
            seed: cfg.classifier_seed,
            ..ClassifierConfig::default()
        };
        println!(
            "training downstream classifier {:?} on {} samples",
            widths,
            train.n()
        );
        let clf =
            train_independent_classifier(&features, labels, &widths, &clf_cfg).map_err(pipeline_err)?;
        let test_features = apply_norm(&test.features, &stats).map_err(pipeline_err)?;
        let acc = clf
            .accuracy(&test_features, test.labels().expect("classification"))
            .map_err(pipeline_err)?;
        println!("clean test accuracy: {acc:.4}");
        artifact::write_classifier(&mut bytes, &clf).map_err(pipeline_err)?;
    } else {
        let params = ForestParams {
            n_estimators: cfg.forest_trees,
            max_depth: cfg.forest_max_depth,
            max_features: cfg.forest_max_features,
            bootstrap: true,
        };
        let targets = train.values().expect("tabular preset is regression");
        println!(
            "training downstream forest ({} trees, depth {}) on {} samples",
            params.n_estimators,
            params.max_depth,
            train.n()
        );
        let forest =
            train_forest(&train.features, targets, params, cfg.seed).map_err(pipeline_err)?;
        let preds = sage_core::downstream::predict_forest(&forest, &test.features);
        let err = rmse(preds.view(), test.values().expect("regression").view());
        println!("clean test RMSE: {err:.4} rings");
        artifact::write_forest(&mut bytes, &forest).map_err(pipeline_err)?;
    }
    write_output(&cfg.downstream_path(), &bytes)?;
    println!("wrote {}", cfg.downstream_path().display());
    Ok(())
}

/// Latent widths swept by `sweep-latent`.
pub const SWEEP_DIMS: [usize; 6] = [2, 8, 16, 32, 64, 128];

fn mean(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn mean_score(scorer: &Scorer, ds: &LabeledDataset) -> Result<f64, CliError> {
    let (_m, scores) = scorer.score_raw(&ds.features).map_err(pipeline_err)?;
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    Ok(mean(&values))
}

/// Retrains the companion at each sweep width and records final losses and
/// mean scores, so the latent-size tradeoff is visible in one table.
pub fn cmd_sweep_latent(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, test, val) = load_split(cfg)?;
    let mut csv = String::from(
        "latent_dim,epochs_ran,train_recon,train_task,train_total,val_total,\
         train_mean_score,test_mean_score\n",
    );
    println!("dim  epochs  train_total  val_total  train_score  test_score");
    for dim in SWEEP_DIMS {
        let mut tc = train_config(cfg);
        tc.latent_dim = dim;
        let TrainedCompanion {
            model, reference, history, ..
        } = train_companion(&cfg.preset, &train, &val, &tc, cfg.k).map_err(pipeline_err)?;
        let last = history.last().expect("at least one epoch").clone();
        let scorer = Scorer::new(model, reference).map_err(pipeline_err)?;
        let train_score = mean_score(&scorer, &train)?;
        let test_score = mean_score(&scorer, &test)?;
        println!(
            "{dim:>3}  {:>6}  {:>11.6}  {:>9.6}  {train_score:>11.4}  {test_score:>10.4}",
            history.len(),
            last.train_total,
            last.val_total,
        );
        let _ = writeln!(
            csv,
            "{dim},{},{},{},{},{},{train_score},{test_score}",
            history.len(),
            last.train_recon,
            last.train_task,
            last.train_total,
            last.val_total,
        );
    }
    write_output(&cfg.sweep_path(), csv.as_bytes())?;
    println!("wrote {}", cfg.sweep_path().display());
    Ok(())
}
