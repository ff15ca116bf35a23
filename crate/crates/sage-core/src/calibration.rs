//! Temperature scaling: fit a single scalar T on validation logits so that
//! softmax(logits / T) minimizes negative log-likelihood.
//!
//! The objective is convex in 1/T (log-sum-exp convexity), hence unimodal in
//! T, so a 1-D golden-section search over log T on [0.05, 20] finds the
//! optimum; no gradient optimizer is needed.

use ndarray::Array2;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SageError};
use crate::nn;
use crate::sae::{SaeModel, Task};

/// Search interval for T.
pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 20.0;
/// Absolute tolerance on log T.
const LOG_T_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub temperature: f64,
    pub nll_before: f64,
    pub nll_after: f64,
}

fn nll(logits: &Array2<f64>, labels: &[usize], t: f64) -> Result<f64> {
    nn::cross_entropy(&(logits / t), labels)
}

/// Fits T on cached logits.
///
/// Falls back to T = 1 if the search cannot improve on it, so
/// `nll_after <= nll_before` always holds.
pub fn fit_temperature_on_logits(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<CalibrationResult> {
    assert!(logits.nrows() > 0, "calibration needs a nonempty validation set");
    let f = |u: f64| nll(logits, labels, u.exp());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = T_MIN.ln();
    let mut b = T_MAX.ln();
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > LOG_T_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    let mut temperature = ((a + b) / 2.0).exp();
    let nll_before = nll(logits, labels, 1.0)?;
    let mut nll_after = nll(logits, labels, temperature)?;
    if nll_after > nll_before {
        temperature = 1.0;
        nll_after = nll_before;
    }
    Ok(CalibrationResult {
        temperature,
        nll_before,
        nll_after,
    })
}

/// Computes validation logits once, fits T, and writes it into the model.
pub fn fit_temperature(
    model: &mut SaeModel,
    validation: &LabeledDataset,
) -> Result<CalibrationResult> {
    match model.task {
        Task::Classification { .. } => {}
        Task::Regression => return Err(SageError::NotClassification),
    }
    let labels = validation
        .labels()
        .ok_or(SageError::NotClassification)?;
    let logits = model.logits(&validation.features)?;
    let result = fit_temperature_on_logits(&logits, labels)?;
    model.temperature = result.temperature;
    Ok(result)
}
