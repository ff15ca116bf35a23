//! Minimal dense neural-network engine.
//!
//! Fully-connected layers with Leaky ReLU activations and inverted dropout,
//! mean-squared-error and cross-entropy losses, manual backpropagation and a
//! bias-corrected Adam optimizer. Training is single-threaded and fully
//! deterministic given a seed.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bytes::{read_f64, read_u32};
use crate::error::{Result, SageError};

/// Magic string at the head of serialized parameter stacks.
pub const NETWORK_MAGIC: &[u8; 8] = b"SAGENETW";
/// Serialization layout version.
pub const NETWORK_VERSION: u32 = 1;

/// Element-wise activation applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// Forward-pass mode. Dropout is active only in [`Mode::Train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A fully-connected layer: `y = dropout(act(x Wᵀ + b))`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `out × in` weight matrix.
    pub weights: Array2<f64>,
    /// Length-`out` bias vector.
    pub biases: Array1<f64>,
    pub activation: Activation,
    /// Inverted-dropout probability in `[0, 1)`; active in train mode only.
    pub dropout_p: f64,
}

impl DenseLayer {
    /// Glorot-uniform initialization: `U(−a, a)` with `a = sqrt(6/(fan_in+fan_out))`.
    pub fn init(
        input: usize,
        output: usize,
        activation: Activation,
        dropout_p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(input > 0 && output > 0, "layer dims must be positive");
        assert!((0.0..1.0).contains(&dropout_p), "dropout_p must be in [0, 1)");
        let a = (6.0 / (input + output) as f64).sqrt();
        let weights = Array2::from_shape_fn((output, input), |_| rng.gen_range(-a..a));
        let biases = Array1::zeros(output);
        DenseLayer {
            weights,
            biases,
            activation,
            dropout_p,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

/// Activations retained by a forward pass for backpropagation.
pub struct ForwardTrace {
    /// Input to each layer (after the previous layer's dropout).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation `z = x Wᵀ + b` per layer.
    preacts: Vec<Array2<f64>>,
    /// Scaled dropout mask per layer (entries 0 or `1/(1−p)`), when active.
    masks: Vec<Option<Array2<f64>>>,
    /// Final layer output.
    pub output: Array2<f64>,
}

/// Parameter gradients, same shapes as the network's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Self {
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].output_dim(),
                pair[1].input_dim(),
                "adjacent layer widths must agree"
            );
        }
        Network { layers }
    }

    /// Builds a stack from a width list, Leaky ReLU + dropout on all
    /// non-final layers and a linear, dropout-free final layer.
    pub fn dense_stack(widths: &[usize], slope: f64, dropout_p: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let last = i == widths.len() - 2;
            let (act, p) = if last {
                (Activation::Linear, 0.0)
            } else {
                (Activation::LeakyRelu(slope), dropout_p)
            };
            layers.push(DenseLayer::init(pair[0], pair[1], act, p, rng));
        }
        Network::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(SageError::ShapeMismatch(format!(
                "batch width {} != first layer input {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if let Some(pos) = batch.iter().position(|v| !v.is_finite()) {
            return Err(SageError::NonFiniteInput(pos));
        }
        Ok(())
    }

    /// Forward pass retaining all per-layer activations.
    ///
    /// Train mode applies inverted dropout from a ChaCha stream seeded with
    /// `seed`; eval mode is deterministic and dropout-free.
    pub fn forward(&self, batch: &Array2<f64>, mode: Mode, seed: u64) -> Result<ForwardTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.forward_rng(batch, mode, &mut rng)
    }

    /// Forward pass drawing dropout masks from an existing stream.
    pub fn forward_rng(
        &self,
        batch: &Array2<f64>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let z = x.dot(&layer.weights.t()) + &layer.biases;
            let mut a = z.mapv(|v| layer.activation.apply(v));
            let mask = if mode == Mode::Train && layer.dropout_p > 0.0 {
                let keep = 1.0 - layer.dropout_p;
                let m = Array2::from_shape_fn(a.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                a *= &m;
                Some(m)
            } else {
                None
            };
            inputs.push(x);
            preacts.push(z);
            masks.push(mask);
            x = a;
        }
        Ok(ForwardTrace {
            inputs,
            preacts,
            masks,
            output: x,
        })
    }

    /// Dropout-free forward pass returning only the output.
    pub fn eval(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            let z = x.dot(&layer.weights.t()) + &layer.biases;
            x = z.mapv(|v| layer.activation.apply(v));
        }
        Ok(x)
    }

    /// Backpropagates `upstream = dL/d(output)` through the trace.
    ///
    /// Returns parameter gradients and the gradient with respect to the
    /// network input (for chaining stacks).
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if trace.inputs.len() != self.layers.len() {
            return Err(SageError::ShapeMismatch(format!(
                "trace has {} layers, network has {}",
                trace.inputs.len(),
                self.layers.len()
            )));
        }
        if upstream.raw_dim() != trace.output.raw_dim() {
            return Err(SageError::ShapeMismatch(format!(
                "upstream gradient shape {:?} != output shape {:?}",
                upstream.shape(),
                trace.output.shape()
            )));
        }
        let mut grad_w = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut grad_b = vec![Array1::zeros(0); self.layers.len()];
        let mut g = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &trace.masks[l] {
                g *= mask;
            }
            let gz = &g * &trace.preacts[l].mapv(|z| layer.activation.derivative(z));
            grad_w[l] = gz.t().dot(&trace.inputs[l]);
            grad_b[l] = gz.sum_axis(Axis(0));
            g = gz.dot(&layer.weights);
        }
        Ok((
            Gradients {
                weights: grad_w,
                biases: grad_b,
            },
            g,
        ))
    }

    /// Versioned flat parameter serialization (little-endian f64, row-major).
    pub fn serialize(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(NETWORK_MAGIC)?;
        w.write_all(&NETWORK_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.output_dim() as u32).to_le_bytes())?;
            w.write_all(&(layer.input_dim() as u32).to_le_bytes())?;
            let (code, slope) = match layer.activation {
                Activation::Linear => (0u8, 0.0),
                Activation::LeakyRelu(s) => (1u8, s),
            };
            w.write_all(&[code])?;
            w.write_all(&slope.to_le_bytes())?;
            w.write_all(&layer.dropout_p.to_le_bytes())?;
            for v in layer.weights.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in layer.biases.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn deserialize(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != NETWORK_MAGIC {
            return Err(SageError::Format(format!(
                "bad network magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(r)?;
        if version != NETWORK_VERSION {
            return Err(SageError::Format(format!(
                "unsupported network version {version}"
            )));
        }
        let n_layers = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let out = read_u32(r)? as usize;
            let input = read_u32(r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let slope = read_f64(r)?;
            let dropout_p = read_f64(r)?;
            let activation = match code[0] {
                0 => Activation::Linear,
                1 => Activation::LeakyRelu(slope),
                c => return Err(SageError::Format(format!("unknown activation code {c}"))),
            };
            let mut wbuf = vec![0.0; out * input];
            for v in wbuf.iter_mut() {
                *v = read_f64(r)?;
            }
            let mut bbuf = vec![0.0; out];
            for v in bbuf.iter_mut() {
                *v = read_f64(r)?;
            }
            let weights = Array2::from_shape_vec((out, input), wbuf)
                .map_err(|e| SageError::Format(e.to_string()))?;
            layers.push(DenseLayer {
                weights,
                biases: Array1::from_vec(bbuf),
                activation,
                dropout_p,
            });
        }
        Ok(Network { layers })
    }
}

/// Row-wise softmax, numerically stabilized by max-subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy of `−log softmax(logits)[label]` over the batch.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let (n, classes) = logits.dim();
    if labels.len() != n {
        return Err(SageError::ShapeMismatch(format!(
            "{n} logit rows, {} labels",
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &label) in logits.rows().into_iter().zip(labels) {
        if label >= classes {
            return Err(SageError::LabelOutOfRange { label, classes });
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - row[label];
    }
    Ok(total / n as f64)
}

/// Gradient of [`cross_entropy`] with respect to the logits: `(softmax − onehot)/n`.
pub fn cross_entropy_grad(logits: &Array2<f64>, labels: &[usize]) -> Result<Array2<f64>> {
    let (n, classes) = logits.dim();
    if labels.len() != n {
        return Err(SageError::ShapeMismatch(format!(
            "{n} logit rows, {} labels",
            labels.len()
        )));
    }
    let mut grad = softmax(logits);
    for (mut row, &label) in grad.rows_mut().into_iter().zip(labels) {
        if label >= classes {
            return Err(SageError::LabelOutOfRange { label, classes });
        }
        row[label] -= 1.0;
    }
    grad /= n as f64;
    Ok(grad)
}

/// Mean over all elements of the squared difference.
pub fn mse(prediction: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if prediction.raw_dim() != target.raw_dim() {
        return Err(SageError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let n = prediction.len() as f64;
    Ok(prediction
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse`] with respect to the prediction: `2(p − t)/len`.
pub fn mse_grad(prediction: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let n = prediction.len() as f64;
    (prediction - target) * (2.0 / n)
}

/// Per-row mean squared error; the mean of the result equals [`mse`].
pub fn mse_per_row(prediction: &Array2<f64>, target: &Array2<f64>) -> Array1<f64> {
    let d = prediction.ncols() as f64;
    let mut out = Array1::zeros(prediction.nrows());
    for (i, (p, t)) in prediction
        .rows()
        .into_iter()
        .zip(target.rows())
        .enumerate()
    {
        out[i] = p
            .iter()
            .zip(t.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            / d;
    }
    out
}

/// Bias-corrected Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    /// Standard defaults: β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(network: &Network, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m_w: network
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            v_w: network
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            m_b: network
                .layers
                .iter()
                .map(|l| Array1::zeros(l.biases.raw_dim()))
                .collect(),
            v_b: network
                .layers
                .iter()
                .map(|l| Array1::zeros(l.biases.raw_dim()))
                .collect(),
        }
    }

    /// One bias-corrected Adam update over every parameter tensor.
    pub fn step(&mut self, network: &mut Network, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (l, layer) in network.layers.iter_mut().enumerate() {
            adam_update(
                &mut layer.weights,
                &grads.weights[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            adam_update(
                &mut layer.biases,
                &grads.biases[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update<D: ndarray::Dimension>(
    params: &mut ndarray::Array<f64, D>,
    grads: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    ndarray::Zip::from(params)
        .and(grads)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
}
