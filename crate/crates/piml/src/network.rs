//! Feed-forward networks, parameter initialization, Adam, and checkpoints.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{NodeId, TapeGraph, UnaryKind, Workspace};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
    Cos,
}

impl Activation {
    fn unary(self) -> UnaryKind {
        match self {
            Activation::Tanh => UnaryKind::Tanh,
            Activation::Sin => UnaryKind::Sin,
            Activation::Cos => UnaryKind::Cos,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sin => z.sin(),
            Activation::Cos => z.cos(),
        }
    }
}

/// A fully connected network with a linear last layer.
///
/// The optional adaptive slope follows the σ(a·z) form with one learnable
/// scalar per hidden layer, initialized to 1. `output_scale`/`output_offset`
/// are fixed (non-trainable) affine factors applied to the outputs so fields
/// with large magnitudes can be learned from O(1) network outputs.
#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    activation: Activation,
    adaptive_slope: Option<Vec<f64>>,
    output_scale: f64,
    output_offset: f64,
}

impl Mlp {
    /// Xavier-uniform weights and zero biases, deterministic for a fixed seed.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "network needs at least 2 layers, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::ShapeMismatch(format!(
                "layer sizes must be >= 1, got {:?}",
                layer_sizes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            weights.push(Tensor::new(vec![fan_out, fan_in], data)?);
            biases.push(Tensor::zeros(vec![fan_out]));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
            adaptive_slope: None,
            output_scale: 1.0,
            output_offset: 0.0,
        })
    }

    pub fn with_adaptive_slope(mut self, enabled: bool) -> Self {
        self.adaptive_slope = enabled.then(|| vec![1.0; self.layer_sizes.len() - 2]);
        self
    }

    pub fn with_output_transform(mut self, scale: f64, offset: f64) -> Self {
        self.output_scale = scale;
        self.output_offset = offset;
        self
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn adaptive_slopes(&self) -> Option<&[f64]> {
        self.adaptive_slope.as_deref()
    }

    /// Number of trainable scalars (weights, biases, adaptive slopes).
    pub fn n_params(&self) -> usize {
        let wb: usize = self
            .layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        wb + self.adaptive_slope.as_ref().map_or(0, |s| s.len())
    }

    /// Flatten parameters in emission order: per layer weights (row-major)
    /// then biases, then adaptive slopes.
    pub fn write_flat(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.n_params());
        let mut k = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out[k..k + w.len()].copy_from_slice(w.data());
            k += w.len();
            out[k..k + b.len()].copy_from_slice(b.data());
            k += b.len();
        }
        if let Some(slopes) = &self.adaptive_slope {
            out[k..k + slopes.len()].copy_from_slice(slopes);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_params()];
        self.write_flat(&mut out);
        out
    }

    pub fn read_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.len();
            w.data_mut().copy_from_slice(&flat[k..k + n]);
            k += n;
            let n = b.len();
            b.data_mut().copy_from_slice(&flat[k..k + n]);
            k += n;
        }
        if let Some(slopes) = &mut self.adaptive_slope {
            let n = slopes.len();
            slopes.copy_from_slice(&flat[k..k + n]);
        }
    }

    /// Emit the forward pass onto a tape. Parameter leaves occupy slots
    /// `base..base + n_params()` in [`Self::write_flat`] order; the same
    /// slots may be emitted at many collocation points and their gradients
    /// accumulate.
    pub fn emit(&self, tape: &mut TapeGraph, base: usize, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
        if inputs.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                inputs.len()
            )));
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut slot = base;
        let mut slope_slot = base
            + self
                .layer_sizes
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum::<usize>();
        let mut x: Vec<NodeId> = inputs.to_vec();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w_base = slot;
            let b_base = slot + fan_in * fan_out;
            slot = b_base + fan_out;
            let mut z = Vec::with_capacity(fan_out);
            let mut terms = Vec::with_capacity(fan_in + 1);
            for i in 0..fan_out {
                terms.clear();
                for (j, &xj) in x.iter().enumerate() {
                    let w = tape.param(w_base + i * fan_in + j);
                    terms.push(tape.mul(w, xj));
                }
                let b = tape.param(b_base + i);
                terms.push(b);
                z.push(tape.sum(&terms));
            }
            if l + 1 < n_layers {
                let kind = self.activation.unary();
                let slope = self.adaptive_slope.as_ref().map(|_| {
                    let s = tape.param(slope_slot);
                    slope_slot += 1;
                    s
                });
                x = z
                    .into_iter()
                    .map(|zi| {
                        let zi = match slope {
                            Some(a) => tape.mul(a, zi),
                            None => zi,
                        };
                        tape.unary(kind, zi)
                    })
                    .collect();
            } else {
                x = z;
            }
        }
        if self.output_scale != 1.0 || self.output_offset != 0.0 {
            x = x
                .into_iter()
                .map(|o| {
                    let s = tape.scale(o, self.output_scale);
                    tape.add_const(s, self.output_offset)
                })
                .collect();
        }
        Ok(x)
    }

    /// Plain (derivative-free) evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut cur = x.to_vec();
        for l in 0..n_layers {
            let mut z = self.weights[l].matvec(&cur)?;
            for (zi, bi) in z.iter_mut().zip(self.biases[l].data()) {
                *zi += bi;
            }
            if l + 1 < n_layers {
                let a = self.adaptive_slope.as_ref().map_or(1.0, |s| s[l]);
                for zi in z.iter_mut() {
                    *zi = self.activation.apply(a * *zi);
                }
            }
            cur = z;
        }
        for v in cur.iter_mut() {
            *v = self.output_scale * *v + self.output_offset;
        }
        Ok(cur)
    }

    /// Exact partial derivative ∂^index of a scalar-output network at `x`,
    /// computed by jet propagation (never finite differences).
    pub fn input_derivative(&self, x: &[f64], index: &[u8]) -> Result<f64> {
        let order: usize = index.iter().map(|&v| v as usize).sum();
        if order > crate::jet::MAX_ORDER {
            return Err(Error::OrderOverflow {
                order,
                max: crate::jet::MAX_ORDER,
            });
        }
        let mut tape = TapeGraph::new(self.input_dim(), order);
        let pts = tape.seeded_point(x);
        let out = self.emit(&mut tape, 0, &pts)?[0];
        let mut ws = Workspace::new(&tape);
        tape.forward(&self.flat_params(), &[], &mut ws)?;
        tape.derivative(&ws, out, index)
    }
}

/// Bias-corrected Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam descent step in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, state of {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// One gradient ASCENT step (used for self-adaptive weights).
pub fn ascent_step(weights: &mut [f64], grads: &[f64], eta: f64) -> Result<()> {
    if weights.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "ascent: {} weights vs {} grads",
            weights.len(),
            grads.len()
        )));
    }
    assert!(eta > 0.0);
    for (w, g) in weights.iter_mut().zip(grads) {
        *w += eta * g;
    }
    Ok(())
}

const CHECKPOINT_SCHEMA: &str = "piml-mlp-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema: String,
    layer_sizes: Vec<usize>,
    activation: Activation,
    adaptive_slope: Option<Vec<f64>>,
    output_scale: f64,
    output_offset: f64,
    /// Row-major weight matrices, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

pub fn save_checkpoint(net: &Mlp, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        schema: CHECKPOINT_SCHEMA.to_string(),
        layer_sizes: net.layer_sizes.clone(),
        activation: net.activation,
        adaptive_slope: net.adaptive_slope.clone(),
        output_scale: net.output_scale,
        output_offset: net.output_offset,
        weights: net.weights.iter().map(|w| w.data().to_vec()).collect(),
        biases: net.biases.iter().map(|b| b.data().to_vec()).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp> {
    let file: CheckpointFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.schema != CHECKPOINT_SCHEMA {
        return Err(Error::Config {
            path: "schema".into(),
            msg: format!("expected {CHECKPOINT_SCHEMA}, got {}", file.schema),
        });
    }
    let mut net = Mlp::init(&file.layer_sizes, file.activation, 0)?
        .with_output_transform(file.output_scale, file.output_offset);
    net.adaptive_slope = file.adaptive_slope;
    for (l, (w, b)) in file.weights.iter().zip(&file.biases).enumerate() {
        net.weights[l] = Tensor::new(net.weights[l].shape().to_vec(), w.clone())?;
        net.biases[l] = Tensor::new(vec![b.len()], b.clone())?;
    }
    Ok(net)
}
