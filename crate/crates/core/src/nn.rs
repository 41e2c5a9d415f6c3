//! Small dense feed-forward networks with hand-written backpropagation.
//!
//! This is all the model machinery the generator, the teacher and student
//! discriminators, and the MLP benchmark classifier need: batched forward
//! with an activation cache, exact gradients, and SGD/Adam/RMSProp updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const BCE_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

/// Feed-forward network. `layer_widths` runs input..output inclusive, so a
/// net with widths [4, 8, 1] has one hidden layer of 8 units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_widths: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

/// Per-parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: input batch, then each post-activation.
    inputs: Vec<Matrix>,
    /// Pre-activation values per layer.
    pre: Vec<Matrix>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::Config("network needs input and output widths".into()));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("zero-width layer".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_in, fan_out);
            for v in w.data.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            layer_widths,
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn activate_hidden(&self, x: f64) -> f64 {
        match self.hidden_activation {
            HiddenActivation::Relu => x.max(0.0),
            HiddenActivation::Tanh => x.tanh(),
        }
    }

    fn hidden_derivative(&self, pre: f64) -> f64 {
        match self.hidden_activation {
            HiddenActivation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }

    /// Batched forward pass. Returns post-activation outputs and the cache
    /// needed for [`Mlp::backward`].
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if batch.cols != self.input_width() {
            return Err(Error::Shape(format!(
                "batch width {} vs network input {}",
                batch.cols,
                self.input_width()
            )));
        }
        if !batch.is_finite() {
            return Err(Error::NonFinite("non-finite network input".into()));
        }
        let mut inputs = vec![batch.clone()];
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut current = batch.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = current.matmul(w);
            z.add_row_broadcast(b);
            pre.push(z.clone());
            let last = l + 1 == self.n_layers();
            current = if last {
                match self.output_activation {
                    OutputActivation::Sigmoid => z.map(sigmoid),
                    OutputActivation::Identity => z,
                }
            } else {
                z.map(|v| self.activate_hidden(v))
            };
            inputs.push(current.clone());
        }
        let cache = ForwardCache {
            inputs,
            pre,
        };
        Ok((current, cache))
    }

    /// Convenience forward without keeping the cache.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.0)
    }

    /// Backpropagate `output_grad` (gradient of the loss with respect to the
    /// post-activation outputs). Returns parameter gradients and the gradient
    /// with respect to the input batch; the latter is what lets the generator
    /// train through a frozen discriminator.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        let n = self.n_layers();
        if cache.pre.len() != n || cache.inputs.len() != n + 1 {
            return Err(Error::Shape("stale or mismatched forward cache".into()));
        }
        let out = &cache.inputs[n];
        if output_grad.rows != out.rows || output_grad.cols != out.cols {
            return Err(Error::Shape("output gradient shape mismatch".into()));
        }
        let mut w_grads = vec![Matrix::zeros(0, 0); n];
        let mut b_grads = vec![Vec::new(); n];

        // delta starts as dL/dz for the output layer
        let mut delta = match self.output_activation {
            OutputActivation::Sigmoid => {
                let mut d = output_grad.clone();
                for (dv, &o) in d.data.iter_mut().zip(&out.data) {
                    *dv *= o * (1.0 - o);
                }
                d
            }
            OutputActivation::Identity => output_grad.clone(),
        };

        for l in (0..n).rev() {
            let layer_in = &cache.inputs[l];
            w_grads[l] = layer_in.matmul_tn(&delta);
            b_grads[l] = delta.col_sums();
            // propagate to the previous layer
            delta = delta.matmul_nt(&self.weights[l]);
            if l > 0 {
                for (dv, &p) in delta.data.iter_mut().zip(&cache.pre[l - 1].data) {
                    *dv *= self.hidden_derivative(p);
                }
            }
        }
        Ok((
            Gradients {
                weights: w_grads,
                biases: b_grads,
            },
            delta,
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.biases.iter().flatten().all(|b| b.is_finite())
    }
}

/// Mean binary cross-entropy and its gradient with respect to the
/// predictions. Predictions are clipped away from {0, 1} before the log.
/// Targets may be soft labels in [0, 1].
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Shape("empty prediction vector".into()));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (&p_raw, &y) in predictions.iter().zip(targets) {
        let p = p_raw.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((p - y) / (p * (1.0 - p)) / n);
    }
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const RMSPROP_DECAY: f64 = 0.9;
const EPSILON: f64 = 1e-8;

/// Optimizer state for one network: per-parameter moment buffers plus a step
/// counter for bias correction.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    m_weights: Vec<Matrix>,
    m_biases: Vec<Vec<f64>>,
    v_weights: Vec<Matrix>,
    v_biases: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, net: &Mlp) -> Self {
        let m_weights = net.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect();
        let v_weights = net.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect();
        let m_biases = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let v_biases = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        OptimizerState {
            kind,
            learning_rate,
            step: 0,
            m_weights,
            m_biases,
            v_weights,
            v_biases,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update in place.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        for g in &grads.weights {
            if !g.is_finite() {
                return Err(Error::NonFinite("non-finite weight gradient".into()));
            }
        }
        if grads.biases.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("non-finite bias gradient".into()));
        }
        self.step += 1;
        let t = self.step;
        let lr = self.learning_rate;
        for l in 0..net.weights.len() {
            update_slice(
                self.kind,
                lr,
                t,
                &mut net.weights[l].data,
                &grads.weights[l].data,
                &mut self.m_weights[l].data,
                &mut self.v_weights[l].data,
            );
            update_slice(
                self.kind,
                lr,
                t,
                &mut net.biases[l],
                &grads.biases[l],
                &mut self.m_biases[l],
                &mut self.v_biases[l],
            );
        }
        Ok(())
    }
}

fn update_slice(
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    match kind {
        OptimizerKind::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam => {
            let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        OptimizerKind::Rmsprop => {
            for i in 0..params.len() {
                let g = grads[i];
                v[i] = RMSPROP_DECAY * v[i] + (1.0 - RMSPROP_DECAY) * g * g;
                params[i] -= lr * g / (v[i].sqrt() + EPSILON);
            }
        }
    }
}
