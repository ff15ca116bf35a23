//! Evaluation of score-based filtering: retention curves, micro-averaged
//! precision–recall, RMSE, measure correlations, latent binning, the
//! component-vs-ensemble comparison, and small SVG renderings of the curves.

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SageError};
use crate::scoring::Measures;

/// The six score thresholds swept by default.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.0, 0.01, 0.05, 0.1, 0.15, 0.2];

/// Keeps samples scoring at or above `t`; returns their indices and the
/// retained fraction.
pub fn filter_by_score(scores: &[f64], t: f64) -> (Vec<usize>, f64) {
    let retained: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
    let fraction = retained.len() as f64 / scores.len() as f64;
    (retained, fraction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetentionCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

pub fn retention_curve(scores: &[f64], thresholds: &[f64]) -> RetentionCurve {
    let fractions = thresholds
        .iter()
        .map(|&t| filter_by_score(scores, t).1)
        .collect();
    RetentionCurve {
        thresholds: thresholds.to_vec(),
        fractions,
    }
}

/// Precision–recall sweep over descending unique prediction scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// Distinct score thresholds, descending.
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub average_precision: f64,
}

/// PR curve over flat (score, is-positive) pairs. Samples with equal scores
/// enter the confusion counts together, as a single threshold step.
/// `AP = Σ (R_n − R_{n−1}) · P_n` with `R_0 = 0`.
pub fn pr_from_pairs(scores: &[f64], positives: &[bool]) -> Result<PrCurve> {
    assert_eq!(scores.len(), positives.len());
    let total_pos = positives.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return Err(SageError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = Vec::new();
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut ap = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // absorb the whole tie group before emitting a point
        while i < order.len() && scores[order[i]] == t {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let p = tp as f64 / (tp + fp) as f64;
        let r = tp as f64 / total_pos as f64;
        ap += (r - prev_recall) * p;
        prev_recall = r;
        thresholds.push(t);
        precision.push(p);
        recall.push(r);
    }
    Ok(PrCurve {
        thresholds,
        precision,
        recall,
        average_precision: ap,
    })
}

/// Micro-averaged PR curve: one-hot the labels and flatten all n×C
/// (probability, is-positive) pairs into a single binary sweep.
pub fn pr_curve_micro(probabilities: &Array2<f64>, labels: &[usize]) -> Result<PrCurve> {
    let (n, c) = probabilities.dim();
    assert_eq!(n, labels.len());
    let mut scores = Vec::with_capacity(n * c);
    let mut positives = Vec::with_capacity(n * c);
    for i in 0..n {
        debug_assert!((probabilities.row(i).sum() - 1.0).abs() < 1e-6);
        for class in 0..c {
            scores.push(probabilities[(i, class)]);
            positives.push(labels[i] == class);
        }
    }
    pr_from_pairs(&scores, &positives)
}

/// Fraction of predictions equal to their label.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / predictions.len() as f64
}

/// Root mean squared error between predictions and targets.
pub fn rmse(predictions: ArrayView1<f64>, targets: ArrayView1<f64>) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    let ss: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    (ss / predictions.len() as f64).sqrt()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0; // a constant measure carries no correlation signal
    }
    cov / (vx * vy).sqrt()
}

/// 3×3 Pearson correlation matrix over the measure columns, ordered
/// (knn, recon, task). Diagonal is exactly 1.
pub fn measure_correlations(m: &Measures) -> Array2<f64> {
    let cols = [
        m.m_knn.as_slice().expect("contiguous"),
        m.m_recon.as_slice().expect("contiguous"),
        m.m_task.as_slice().expect("contiguous"),
    ];
    let mut out = Array2::zeros((3, 3));
    for i in 0..3 {
        out[(i, i)] = 1.0;
        for j in i + 1..3 {
            let r = pearson(cols[i], cols[j]);
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    out
}

/// Per-bin count and mean over a 2-D embedding grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBins {
    /// `bins + 1` edges spanning [min, max] of dimension 0.
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Array2<usize>,
    /// Mean per-point value per bin; NaN flags an empty bin.
    pub means: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentBins {
    /// Latent dimension 2: a full (count, mean) grid.
    Grid(GridBins),
    /// Any other dimension: one histogram per latent axis.
    Histograms(Vec<DimHistogram>),
}

fn edges(min: f64, max: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| min + (max - min) * i as f64 / bins as f64)
        .collect()
}

fn bin_of(v: f64, min: f64, max: f64, bins: usize) -> usize {
    if max == min {
        return 0; // degenerate span: everything lands in the first bin
    }
    (((v - min) / (max - min) * bins as f64) as usize).min(bins - 1)
}

/// Bins an embedding into `bins_per_dim` bins per dimension, spanning
/// [min, max] of each axis. 2-D embeddings get a grid annotated with the
/// mean of `values` per bin; other dimensions get per-axis histograms.
pub fn latent_bins(embedding: &Array2<f64>, values: &[f64], bins_per_dim: usize) -> LatentBins {
    let (n, d) = embedding.dim();
    assert_eq!(n, values.len());
    assert!(n > 0 && bins_per_dim > 0);
    let span = |dim: usize| {
        let col = embedding.column(dim);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    };
    if d == 2 {
        let (x_min, x_max) = span(0);
        let (y_min, y_max) = span(1);
        let mut counts = Array2::zeros((bins_per_dim, bins_per_dim));
        let mut sums = Array2::<f64>::zeros((bins_per_dim, bins_per_dim));
        for i in 0..n {
            let bx = bin_of(embedding[(i, 0)], x_min, x_max, bins_per_dim);
            let by = bin_of(embedding[(i, 1)], y_min, y_max, bins_per_dim);
            counts[(bx, by)] += 1;
            sums[(bx, by)] += values[i];
        }
        let means = Array2::from_shape_fn((bins_per_dim, bins_per_dim), |(x, y)| {
            if counts[(x, y)] == 0 {
                f64::NAN
            } else {
                sums[(x, y)] / counts[(x, y)] as f64
            }
        });
        LatentBins::Grid(GridBins {
            x_edges: edges(x_min, x_max, bins_per_dim),
            y_edges: edges(y_min, y_max, bins_per_dim),
            counts,
            means,
        })
    } else {
        let per_dim = (0..d)
            .map(|dim| {
                let (min, max) = span(dim);
                let mut counts = vec![0usize; bins_per_dim];
                for i in 0..n {
                    counts[bin_of(embedding[(i, dim)], min, max, bins_per_dim)] += 1;
                }
                DimHistogram {
                    edges: edges(min, max, bins_per_dim),
                    counts,
                }
            })
            .collect();
        LatentBins::Histograms(per_dim)
    }
}

/// Trapezoid-rule integral of the piecewise-linear curve through
/// `(x[i], y[i])`.
pub fn trapezoid_auc(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

/// One filtering criterion's metric-vs-threshold curve.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub label: String,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub auc: f64,
}

/// Sweeps each criterion (component exceedance probabilities and the
/// ensemble score) over the thresholds, filtering by `criterion ≥ t` and
/// handing the retained indices to `metric`.
///
/// `metric` returns None for sets it cannot evaluate (empty); such points
/// reuse the previous threshold's value so every curve covers the full
/// range and AUCs stay comparable. The first threshold must be evaluable.
pub fn component_vs_ensemble(
    thresholds: &[f64],
    criteria: &[(&str, &[f64])],
    mut metric: impl FnMut(&[usize]) -> Option<f64>,
) -> Vec<MetricCurve> {
    criteria
        .iter()
        .map(|&(label, per_sample)| {
            let mut values = Vec::with_capacity(thresholds.len());
            let mut last = None;
            for &t in thresholds {
                let retained: Vec<usize> = (0..per_sample.len())
                    .filter(|&i| per_sample[i] >= t)
                    .collect();
                let v = metric(&retained).or(last).expect(
                    "the first threshold must retain an evaluable set",
                );
                values.push(v);
                last = Some(v);
            }
            let auc = trapezoid_auc(thresholds, &values);
            MetricCurve {
                label: label.to_string(),
                thresholds: thresholds.to_vec(),
                values,
                auc,
            }
        })
        .collect()
}

/// Mean silhouette coefficient of a labeled embedding, on a subsample of at
/// most `max_n` points. Positive values indicate visible cluster structure;
/// single-member clusters contribute 0.
pub fn silhouette(embedding: &Array2<f64>, labels: &[usize], max_n: usize, seed: u64) -> f64 {
    let n = embedding.nrows();
    assert_eq!(n, labels.len());
    assert!(n >= 2);
    let chosen: Vec<usize> = if n <= max_n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, max_n).into_vec();
        idx.sort_unstable();
        idx
    };
    let m = chosen.len();
    let dist = |a: usize, b: usize| -> f64 {
        let (ra, rb) = (embedding.row(chosen[a]), embedding.row(chosen[b]));
        ra.iter()
            .zip(rb)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let n_classes = chosen.iter().map(|&i| labels[i]).max().unwrap() + 1;
    let mut class_sizes = vec![0usize; n_classes];
    for &i in &chosen {
        class_sizes[labels[i]] += 1;
    }
    let mut total = 0.0;
    for i in 0..m {
        let own = labels[chosen[i]];
        if class_sizes[own] < 2 {
            continue; // convention: singletons score 0
        }
        let mut sums = vec![0.0; n_classes];
        for j in 0..m {
            if i != j {
                sums[labels[chosen[j]]] += dist(i, j);
            }
        }
        let a = sums[own] / (class_sizes[own] - 1) as f64;
        let b = (0..n_classes)
            .filter(|&c| c != own && class_sizes[c] > 0)
            .map(|c| sums[c] / class_sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / m as f64
}

/// One named series for [`svg_line_plot`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvgSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders named series as a minimal line plot: axes with min/max tick
/// labels, one polyline per series, and a text legend. Purely a convenience
/// artifact — no layout or styling guarantees.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[SvgSeries]) -> String {
    let (width, height) = (640.0, 480.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let bound = |f: fn((f64, f64)) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        all.iter().copied().map(f).fold(init, pick)
    };
    let (mut x_min, mut x_max) = (
        bound(|p| p.0, f64::INFINITY, f64::min),
        bound(|p| p.0, f64::NEG_INFINITY, f64::max),
    );
    let (mut y_min, mut y_max) = (
        bound(|p| p.1, f64::INFINITY, f64::min),
        bound(|p| p.1, f64::NEG_INFINITY, f64::max),
    );
    if !x_min.is_finite() || x_min == x_max {
        (x_min, x_max) = (x_min.min(0.0), x_max.max(1.0));
    }
    if !y_min.is_finite() || y_min == y_max {
        (y_min, y_max) = (y_min.min(0.0), y_max.max(1.0));
    }
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * (width - left - right);
    let sy = |y: f64| height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        width / 2.0
    ));
    // axes
    out.push_str(&format!(
        "  <line x1=\"{l:.1}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        l = left,
        r = width - right,
        b = height - bottom
    ));
    out.push_str(&format!(
        "  <line x1=\"{l:.1}\" y1=\"{t:.1}\" x2=\"{l:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        l = left,
        t = top,
        b = height - bottom
    ));
    // tick labels at the extremes
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_min}</text>\n",
        left,
        height - bottom + 16.0
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_max}</text>\n",
        width - right,
        height - bottom + 16.0
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y_min}</text>\n",
        left - 6.0,
        height - bottom
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y_max}</text>\n",
        left - 6.0,
        top + 10.0
    ));
    out.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        (left + width - right) / 2.0,
        height - 12.0
    ));
    out.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1})\">{y_label}</text>\n",
        (top + height - bottom) / 2.0
    ));
    for (i, s) in series.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            width - right - 150.0,
            top + 16.0 * (i + 1) as f64,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}
