//! The `eval` command: retention curves, downstream metrics under
//! filtering, component-vs-ensemble comparison, and a machine-readable
//! summary.

use std::fmt::Write as _;
use std::fs;

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use sage_core::artifact::{read_classifier, read_forest};
use sage_core::dataset::{apply_norm, image_norm_stats};
use sage_core::downstream::{predict_forest, IndependentClassifier, RandomForest};
use sage_core::evaluation::{
    accuracy, component_vs_ensemble, measure_correlations, pr_curve_micro, retention_curve, rmse,
    svg_line_plot, MetricCurve, SvgSeries,
};
use sage_core::scoring::Measures;

use crate::config::RunConfig;
use crate::data::{input_err, load_split, pipeline_err, tagged_blocks, write_output, TaggedBlock};
use crate::score::{group_by_tag, read_scores, ScoreRow};
use crate::CliError;

#[derive(Serialize)]
struct Summary {
    preset: String,
    seed: u64,
    thresholds: Vec<f64>,
    tags: Vec<TagSummary>,
    /// All transform tags pooled into one set; absent when none were scored.
    pooled_transformed: Option<TagSummary>,
    component_auc: Vec<ComponentAuc>,
    /// Pearson correlations between the raw measures on the test tag.
    test_measure_correlations: Option<CorrelationSummary>,
}

#[derive(Serialize)]
struct TagSummary {
    tag: String,
    n: usize,
    mean_score: f64,
    /// Fraction retained at each threshold.
    retention: Vec<f64>,
    /// Downstream metrics at each threshold; `null` marks an empty
    /// retained set, where the metric is undefined.
    accuracy: Option<Vec<Option<f64>>>,
    average_precision: Option<Vec<Option<f64>>>,
    rmse: Option<Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct ComponentAuc {
    criterion: String,
    metric: String,
    auc: f64,
}

#[derive(Serialize)]
struct CorrelationSummary {
    measures: Vec<String>,
    matrix: Vec<Vec<f64>>,
}

/// Downstream model, either flavor.
enum Downstream {
    Classifier(IndependentClassifier),
    Forest(RandomForest),
}

fn load_downstream(cfg: &RunConfig) -> Result<Downstream, CliError> {
    let path = cfg.downstream_path();
    if !path.exists() {
        return Err(CliError::Input(format!(
            "downstream artifact {} not found (run `sage train-downstream` first)",
            path.display()
        )));
    }
    let bytes = fs::read(&path).map_err(input_err)?;
    Ok(if cfg.is_classification() {
        Downstream::Classifier(read_classifier(&mut bytes.as_slice()).map_err(input_err)?)
    } else {
        Downstream::Forest(read_forest(&mut bytes.as_slice()).map_err(input_err)?)
    })
}

/// Scores plus everything needed to evaluate the downstream model on one
/// tag's samples.
struct EvalBlock {
    tag: String,
    scores: Vec<f64>,
    labels: Option<Vec<usize>>,
    values: Option<Array1<f64>>,
    /// Classifier outputs, classification presets only.
    predictions: Option<Vec<usize>>,
    probabilities: Option<Array2<f64>>,
    /// Forest outputs, regression presets only.
    regressed: Option<Array1<f64>>,
    p_components: [Vec<f64>; 3],
}

fn eval_block(
    rows: &[&ScoreRow],
    block: &TaggedBlock,
    downstream: &Downstream,
) -> Result<EvalBlock, CliError> {
    let mut ordered: Vec<&ScoreRow> = rows.to_vec();
    ordered.sort_by_key(|r| r.id);
    if ordered.len() != block.features.nrows()
        || ordered.iter().enumerate().any(|(i, r)| r.id != i)
    {
        return Err(CliError::Input(format!(
            "score rows for tag {:?} do not match the dataset ({} rows vs {} samples); \
             re-run `sage score`",
            block.tag,
            ordered.len(),
            block.features.nrows()
        )));
    }
    let scores: Vec<f64> = ordered.iter().map(|r| r.score).collect();
    let p_components = [
        ordered.iter().map(|r| r.p[0]).collect(),
        ordered.iter().map(|r| r.p[1]).collect(),
        ordered.iter().map(|r| r.p[2]).collect(),
    ];
    let (mut predictions, mut probabilities, mut regressed) = (None, None, None);
    match downstream {
        Downstream::Classifier(clf) => {
            let stats = image_norm_stats(block.features.ncols());
            let normed = apply_norm(&block.features, &stats).map_err(pipeline_err)?;
            probabilities = Some(clf.predict_proba(&normed).map_err(pipeline_err)?);
            predictions = Some(clf.predict(&normed).map_err(pipeline_err)?);
        }
        Downstream::Forest(forest) => {
            regressed = Some(predict_forest(forest, &block.features));
        }
    }
    Ok(EvalBlock {
        tag: block.tag.clone(),
        scores,
        labels: block.labels.clone(),
        values: block.values.clone(),
        predictions,
        probabilities,
        regressed,
        p_components,
    })
}

/// Concatenates the transform blocks into one pooled pseudo-tag.
fn pool_transforms(blocks: &[EvalBlock]) -> Option<EvalBlock> {
    let parts: Vec<&EvalBlock> = blocks
        .iter()
        .filter(|b| b.tag != "train" && b.tag != "test")
        .collect();
    if parts.is_empty() {
        return None;
    }
    let concat_opt = |pick: fn(&EvalBlock) -> Option<&Vec<usize>>| -> Option<Vec<usize>> {
        pick(parts[0])?;
        Some(parts.iter().flat_map(|b| pick(b).unwrap().iter().copied()).collect())
    };
    let scores: Vec<f64> = parts.iter().flat_map(|b| b.scores.iter().copied()).collect();
    let p_components = [0, 1, 2].map(|i| {
        parts
            .iter()
            .flat_map(|b| b.p_components[i].iter().copied())
            .collect()
    });
    let labels = concat_opt(|b| b.labels.as_ref());
    let predictions = concat_opt(|b| b.predictions.as_ref());
    let values = if parts[0].values.is_some() {
        Some(Array1::from_iter(
            parts.iter().flat_map(|b| b.values.as_ref().unwrap().iter().copied()),
        ))
    } else {
        None
    };
    let regressed = if parts[0].regressed.is_some() {
        Some(Array1::from_iter(
            parts.iter().flat_map(|b| b.regressed.as_ref().unwrap().iter().copied()),
        ))
    } else {
        None
    };
    let probabilities = if parts[0].probabilities.is_some() {
        let views: Vec<_> = parts.iter().map(|b| b.probabilities.as_ref().unwrap().view()).collect();
        Some(ndarray::concatenate(Axis(0), &views).expect("same class count"))
    } else {
        None
    };
    Some(EvalBlock {
        tag: "transformed".to_string(),
        scores,
        labels,
        values,
        predictions,
        probabilities,
        regressed,
        p_components,
    })
}

impl EvalBlock {
    fn mean_score(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len().max(1) as f64
    }

    fn retained(&self, t: f64) -> Vec<usize> {
        (0..self.scores.len()).filter(|&i| self.scores[i] >= t).collect()
    }

    fn accuracy_at(&self, kept: &[usize]) -> Option<f64> {
        let (preds, labels) = (self.predictions.as_ref()?, self.labels.as_ref()?);
        if kept.is_empty() {
            return None;
        }
        let sub_preds: Vec<usize> = kept.iter().map(|&i| preds[i]).collect();
        let sub_labels: Vec<usize> = kept.iter().map(|&i| labels[i]).collect();
        Some(accuracy(&sub_preds, &sub_labels))
    }

    fn ap_at(&self, kept: &[usize]) -> Option<f64> {
        let (proba, labels) = (self.probabilities.as_ref()?, self.labels.as_ref()?);
        if kept.is_empty() {
            return None;
        }
        let sub = proba.select(Axis(0), kept);
        let sub_labels: Vec<usize> = kept.iter().map(|&i| labels[i]).collect();
        pr_curve_micro(&sub, &sub_labels).ok().map(|c| c.average_precision)
    }

    fn rmse_at(&self, kept: &[usize]) -> Option<f64> {
        let (preds, targets) = (self.regressed.as_ref()?, self.values.as_ref()?);
        if kept.is_empty() {
            return None;
        }
        let sub_preds = Array1::from_iter(kept.iter().map(|&i| preds[i]));
        let sub_targets = Array1::from_iter(kept.iter().map(|&i| targets[i]));
        Some(rmse(sub_preds.view(), sub_targets.view()))
    }

    fn summary(&self, thresholds: &[f64], classification: bool) -> TagSummary {
        let per_threshold = |f: &dyn Fn(&[usize]) -> Option<f64>| -> Vec<Option<f64>> {
            thresholds.iter().map(|&t| f(&self.retained(t))).collect()
        };
        TagSummary {
            tag: self.tag.clone(),
            n: self.scores.len(),
            mean_score: self.mean_score(),
            retention: retention_curve(&self.scores, thresholds).fractions,
            accuracy: classification.then(|| per_threshold(&|k| self.accuracy_at(k))),
            average_precision: classification.then(|| per_threshold(&|k| self.ap_at(k))),
            rmse: (!classification).then(|| per_threshold(&|k| self.rmse_at(k))),
        }
    }
}

/// Component-vs-ensemble curves on the pooled transformed set.
fn component_curves(pooled: &EvalBlock, thresholds: &[f64], classification: bool) -> Vec<MetricCurve> {
    let criteria: Vec<(&str, &[f64])> = vec![
        ("sage_score", &pooled.scores),
        ("p_knn", &pooled.p_components[0]),
        ("p_recon", &pooled.p_components[1]),
        ("p_task", &pooled.p_components[2]),
    ];
    component_vs_ensemble(thresholds, &criteria, |kept| {
        if classification {
            pooled.accuracy_at(kept)
        } else {
            pooled.rmse_at(kept)
        }
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let rows = read_scores(&cfg.scores_path())?;
    let groups = group_by_tag(&rows);
    if groups.is_empty() {
        return Err(CliError::Input(format!("{} is empty", cfg.scores_path().display())));
    }
    let downstream = load_downstream(cfg)?;
    let (train, test, _val) = load_split(cfg)?;
    let tags: Vec<String> = groups.iter().map(|(t, _)| t.clone()).collect();
    let feature_blocks = tagged_blocks(cfg, &train, &test, &tags)?;

    let mut blocks = Vec::with_capacity(groups.len());
    for ((_, members), fb) in groups.iter().zip(&feature_blocks) {
        blocks.push(eval_block(members, fb, &downstream)?);
    }
    let pooled = pool_transforms(&blocks);
    let classification = cfg.is_classification();
    let thresholds = &cfg.thresholds;

    // Retention table, one row per (tag, threshold).
    let mut retention_csv = String::from("tag,threshold,fraction\n");
    for block in blocks.iter().chain(&pooled) {
        let curve = retention_curve(&block.scores, thresholds);
        for (&t, &f) in curve.thresholds.iter().zip(&curve.fractions) {
            let _ = writeln!(retention_csv, "{},{t},{f}", block.tag);
        }
    }
    write_output(&cfg.retention_path(), retention_csv.as_bytes())?;

    // Component comparison on the pooled transformed set.
    let metric_name = if classification { "accuracy" } else { "rmse" };
    let curves = match &pooled {
        Some(p) => component_curves(p, thresholds, classification),
        None => Vec::new(),
    };
    if !curves.is_empty() {
        let mut auc_csv = String::from("criterion,metric,auc\n");
        for c in &curves {
            let _ = writeln!(auc_csv, "{},{metric_name},{}", c.label, c.auc);
        }
        write_output(&cfg.component_auc_path(), auc_csv.as_bytes())?;
    }

    // Plots: retention per tag, and the component comparison.
    let retention_series: Vec<SvgSeries> = blocks
        .iter()
        .chain(&pooled)
        .map(|b| SvgSeries {
            label: b.tag.clone(),
            points: thresholds
                .iter()
                .map(|&t| (t, b.retained(t).len() as f64 / b.scores.len() as f64))
                .collect(),
        })
        .collect();
    write_output(
        &cfg.curves_path(),
        svg_line_plot("retention by tag", "threshold", "fraction retained", &retention_series)
            .as_bytes(),
    )?;
    if !curves.is_empty() {
        let metric_series: Vec<SvgSeries> = curves
            .iter()
            .map(|c| SvgSeries {
                label: c.label.clone(),
                points: c.thresholds.iter().copied().zip(c.values.iter().copied()).collect(),
            })
            .collect();
        write_output(
            &cfg.metric_curves_path(),
            svg_line_plot(
                &format!("{metric_name} on pooled transforms"),
                "threshold",
                metric_name,
                &metric_series,
            )
            .as_bytes(),
        )?;
    }

    // Measure correlations on the clean test tag.
    let correlations = groups.iter().find(|(t, _)| t == "test").map(|(_, members)| {
        let mut ordered: Vec<&ScoreRow> = members.clone();
        ordered.sort_by_key(|r| r.id);
        let m = Measures {
            m_knn: ordered.iter().map(|r| r.m[0]).collect(),
            m_recon: ordered.iter().map(|r| r.m[1]).collect(),
            m_task: ordered.iter().map(|r| r.m[2]).collect(),
        };
        let matrix = measure_correlations(&m);
        CorrelationSummary {
            measures: vec!["m_knn".into(), "m_recon".into(), "m_task".into()],
            matrix: matrix.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    });

    let summary = Summary {
        preset: cfg.preset.clone(),
        seed: cfg.seed,
        thresholds: thresholds.clone(),
        tags: blocks.iter().map(|b| b.summary(thresholds, classification)).collect(),
        pooled_transformed: pooled.as_ref().map(|p| p.summary(thresholds, classification)),
        component_auc: curves
            .iter()
            .map(|c| ComponentAuc {
                criterion: c.label.clone(),
                metric: metric_name.to_string(),
                auc: c.auc,
            })
            .collect(),
        test_measure_correlations: correlations,
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(pipeline_err)?;
    json.push('\n');
    write_output(&cfg.summary_path(), json.as_bytes())?;

    // Console digest.
    println!("tag           n      mean   keep@0.1  {metric_name}@0 -> @0.1");
    for block in blocks.iter().chain(&pooled) {
        let kept0 = block.retained(0.0);
        let kept01 = block.retained(0.1);
        let m0 = if classification { block.accuracy_at(&kept0) } else { block.rmse_at(&kept0) };
        let m1 = if classification { block.accuracy_at(&kept01) } else { block.rmse_at(&kept01) };
        let fmt = |v: Option<f64>| v.map_or("  n/a".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<12} {:>5}  {:>6.4}  {:>7.3}   {} -> {}",
            block.tag,
            block.scores.len(),
            block.mean_score(),
            kept01.len() as f64 / block.scores.len() as f64,
            fmt(m0),
            fmt(m1)
        );
    }
    for c in &curves {
        println!("auc[{}] = {:.4} ({metric_name})", c.label, c.auc);
    }
    println!("wrote {}", cfg.retention_path().display());
    if !curves.is_empty() {
        println!("wrote {}", cfg.component_auc_path().display());
        println!("wrote {}", cfg.metric_curves_path().display());
    }
    println!("wrote {}", cfg.curves_path().display());
    println!("wrote {}", cfg.summary_path().display());
    Ok(())
}
