//! Dense feed-forward networks with manual backpropagation and RMSProp.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LdganError, Result};
use crate::linalg::Matrix;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;

const CHECKPOINT_FORMAT: &str = "ldgan-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `x W + b` followed by an activation. `weights` is `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
    // bumped on every parameter mutation so stale tapes are caught
    version: u64,
}

/// Intermediate values recorded by [`MlpNetwork::forward`].
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl Tape {
    /// Output of hidden layer `k` (after its activation).
    pub fn layer_output(&self, k: usize) -> Option<&Matrix> {
        self.inputs.get(k + 1)
    }
}

/// Gradients laid out as `[w0, b0, w1, b1, ...]`, matching [`MlpNetwork::params_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }
}

impl MlpNetwork {
    /// Chains `dims[0] -> dims[1] -> ...`; `activations[k]` follows layer `k`.
    /// Weights are drawn from `N(0, 0.02²)`, biases start at zero.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(LdganError::invalid(format!(
                "{} layer widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(LdganError::invalid("layer widths must be positive"));
        }
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                weights: Matrix::from_fn(w[0], w[1], |_, _| normal.sample(rng)),
                bias: vec![0.0; w[1]],
                activation,
            })
            .collect();
        Ok(MlpNetwork { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LdganError::invalid("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(LdganError::invalid(format!(
                    "layer {k}: bias length {} vs output width {}",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
            if !l.weights.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(LdganError::invalid(format!("layer {k} has non-finite parameters")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(LdganError::invalid(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(MlpNetwork { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, Tape)> {
        if input.cols() != self.input_dim() {
            return Err(LdganError::invalid(format!(
                "network expects width {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let mut z = x.matmul(&layer.weights)?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let act = layer.activation;
            let y = Matrix::from_vec(
                z.rows(),
                z.cols(),
                z.as_slice().iter().map(|&v| act.apply(v)).collect(),
            )?;
            inputs.push(x);
            pre_activations.push(z);
            x = y;
        }
        let out = x.clone();
        inputs.push(x);
        Ok((
            out,
            Tape {
                version: self.version,
                inputs,
                pre_activations,
            },
        ))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.forward(input).map(|(y, _)| y)
    }

    /// Reverse-mode gradients for a linear chain of layers.
    pub fn backward(&self, tape: &Tape, output_grad: &Matrix) -> Result<(ParamGrads, Matrix)> {
        if tape.version != self.version || tape.pre_activations.len() != self.layers.len() {
            return Err(LdganError::invalid(
                "tape does not belong to the current network parameters",
            ));
        }
        let n = tape.inputs[0].rows();
        if output_grad.shape() != (n, self.output_dim()) {
            return Err(LdganError::invalid(format!(
                "output gradient shape {:?}, expected {:?}",
                output_grad.shape(),
                (n, self.output_dim())
            )));
        }
        let mut tensors = vec![Vec::new(); 2 * self.layers.len()];
        let mut grad = output_grad.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &tape.pre_activations[k];
            let act = layer.activation;
            let dz = Matrix::from_vec(
                n,
                z.cols(),
                grad.as_slice()
                    .iter()
                    .zip(z.as_slice())
                    .map(|(g, &pre)| g * act.derivative(pre))
                    .collect(),
            )?;
            let x = &tape.inputs[k];
            tensors[2 * k] = x.transpose().matmul(&dz)?.into_vec();
            let mut db = vec![0.0; z.cols()];
            for r in dz.row_iter() {
                for (b, v) in db.iter_mut().zip(r) {
                    *b += v;
                }
            }
            tensors[2 * k + 1] = db;
            grad = dz.matmul(&layer.weights.transpose())?;
        }
        Ok((ParamGrads { tensors }, grad))
    }

    /// Parameter tensors in gradient order. Invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip_weights(&mut self, c: f64) -> Result<()> {
        for t in self.params_mut() {
            crate::objectives::clip_weights(t, c)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    activation: l.activation,
                    input_dim: l.input_dim(),
                    output_dim: l.output_dim(),
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(LdganError::Format(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let layers = ck
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    weights: Matrix::from_vec(l.input_dim, l.output_dim, l.weights.clone())
                        .map_err(|e| LdganError::Format(e.to_string()))?,
                    bias: l.bias.clone(),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpNetwork::from_layers(layers).map_err(|e| LdganError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())
            .map_err(|e| LdganError::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| LdganError::Format(e.to_string()))?;
        MlpNetwork::from_checkpoint(&ck)
    }
}

/// On-disk network layout: JSON with per-layer shapes and row-major weights
/// (`input_dim x output_dim`). Numbers use shortest round-trip decimals, so a load
/// reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layers: Vec<CheckpointLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub activation: Activation,
    pub input_dim: usize,
    pub output_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub rho: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl RmsPropConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        RmsPropConfig {
            rho: 0.9,
            learning_rate,
            epsilon: 1e-8,
        }
    }
}

/// One RMSProp update of a single tensor:
/// `v ← ρ v + (1 − ρ) g²`, `θ ← θ − α g / (√v + ε)`.
pub fn rmsprop_update(params: &mut [f64], grads: &[f64], v: &mut [f64], cfg: &RmsPropConfig) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), v.len());
    for ((p, &g), vi) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
        *vi = cfg.rho * *vi + (1.0 - cfg.rho) * g * g;
        *p -= cfg.learning_rate * g / (vi.sqrt() + cfg.epsilon);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    accumulators: Vec<Vec<f64>>,
}

impl RmsPropState {
    pub fn new(net: &MlpNetwork, config: RmsPropConfig) -> Self {
        let accumulators = net
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.as_slice().len()], vec![0.0; l.bias.len()]])
            .collect();
        RmsPropState {
            config,
            accumulators,
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    pub fn step(&mut self, net: &mut MlpNetwork, grads: &ParamGrads, direction: Direction) -> Result<()> {
        if grads.tensors.len() != self.accumulators.len() {
            return Err(LdganError::invalid("gradient layout does not match optimizer state"));
        }
        let cfg = self.config;
        for ((p, g), v) in net
            .params_mut()
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.accumulators)
        {
            if p.len() != g.len() || g.len() != v.len() {
                return Err(LdganError::invalid("gradient tensor shape mismatch"));
            }
            match direction {
                Direction::Descend => rmsprop_update(p, g, v, &cfg),
                Direction::Ascend => {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    rmsprop_update(p, &neg, v, &cfg);
                }
            }
        }
        Ok(())
    }
}
