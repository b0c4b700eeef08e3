//! Small dense-network engine with hand-written reverse-mode gradients.
//!
//! Networks are a flat stack of [`Layer`]s. A training-mode forward pass
//! records a [`Tape`]; [`Network::backward`] walks it in reverse and returns
//! the input gradient plus one gradient buffer per parameter, in the order
//! of [`Network::params`].

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, grad_check, CheckLoss, GradCheckReport};
pub use layers::{gelu, gelu_scalar, Activation, BatchNorm, Dense, Embedding, Mode};
pub use loss::{bce, bce_grad, bce_logit_grad, mse, mse_grad, rmse, rmse_grad, RegressionLoss, BCE_CLAMP};
pub use tensor::Tensor;

use layers::{BatchNormCache, DenseCache, EmbeddingCache};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("batch normalization in training mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("non-finite gradient in {param}[{index}]")]
    NonFiniteGradient { param: String, index: usize },
    #[error("parameter state has {got} values, architecture needs {expected}")]
    StateSize { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Embedding(Embedding),
}

/// Shape-only description of a layer, used to rebuild networks from saved
/// parameter blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    BatchNorm {
        features: usize,
        epsilon: f64,
        momentum: f64,
    },
    Embedding {
        categories: usize,
        dim: usize,
    },
}

enum Cache {
    Dense(DenseCache),
    BatchNorm(BatchNormCache),
    Embedding(EmbeddingCache),
}

/// Intermediate values recorded by a training-mode forward pass.
pub struct Tape {
    caches: Vec<Cache>,
}

/// Where the upstream gradient handed to [`Network::backward`] attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputGrad {
    /// Gradient with respect to the network output.
    Output,
    /// Gradient with respect to the final dense layer's pre-activation
    /// (e.g. the logit of a sigmoid head).
    PreActivation,
}

/// One gradient buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self, NnError> {
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            width = match layer {
                Layer::Dense(d) if d.inputs() == width => d.outputs(),
                Layer::BatchNorm(b) if b.features() == width => width,
                Layer::Embedding(e) if i == 0 && width >= 1 => e.dim() + width - 1,
                _ => {
                    return Err(NnError::Shape(format!(
                        "layer {i} does not accept width {width}"
                    )))
                }
            };
        }
        Ok(Self { layers, input_dim })
    }

    /// Stack of `hidden` blocks, each a GELU dense layer optionally followed
    /// by batch normalization, then a dense head.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        units: usize,
        batch_norm: bool,
        output_dim: usize,
        head: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Self::mlp_from(input_dim, Vec::new(), hidden, units, batch_norm, output_dim, head, rng)
    }

    /// Like [`Network::mlp`] but prefixed by `front` layers (e.g. an
    /// embedding) that already map `input_dim` to some width.
    #[allow(clippy::too_many_arguments)]
    pub fn mlp_from<R: Rng + ?Sized>(
        input_dim: usize,
        front: Vec<Layer>,
        hidden: usize,
        units: usize,
        batch_norm: bool,
        output_dim: usize,
        head: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if units == 0 || output_dim == 0 || input_dim == 0 {
            return Err(NnError::Shape("zero-width network".into()));
        }
        let mut width = Self::new(input_dim, front.clone())?.output_dim_or(input_dim);
        let mut layers = front;
        for _ in 0..hidden {
            layers.push(Layer::Dense(Dense::new(width, units, Activation::Gelu, rng)));
            if batch_norm {
                layers.push(Layer::BatchNorm(BatchNorm::new(units)));
            }
            width = units;
        }
        layers.push(Layer::Dense(Dense::new(width, output_dim, head, rng)));
        Self::new(input_dim, layers)
    }

    fn output_dim_or(&self, default: usize) -> usize {
        if self.layers.is_empty() {
            default
        } else {
            self.output_dim()
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        let mut width = self.input_dim;
        for layer in &self.layers {
            width = match layer {
                Layer::Dense(d) => d.outputs(),
                Layer::BatchNorm(_) => width,
                Layer::Embedding(e) => e.dim() + width - 1,
            };
        }
        width
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.cols() != self.input_dim {
            return Err(NnError::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass (batch norm uses running statistics).
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.forward(&h)?,
                Layer::BatchNorm(b) => b.infer(&h)?,
                Layer::Embedding(e) => e.forward_cached(&h)?.0,
            };
        }
        Ok(h)
    }

    /// Training-mode forward pass that also updates batch-norm running
    /// statistics.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, Tape), NnError> {
        let (out, tape, stats) = self.forward_recording(x)?;
        for (layer, s) in self.layers.iter_mut().zip(stats) {
            if let (Layer::BatchNorm(b), Some(s)) = (layer, s) {
                b.update_running(&s);
            }
        }
        Ok((out, tape))
    }

    /// Training-mode forward pass without touching running statistics.
    pub fn forward_frozen(&self, x: &Tensor) -> Result<(Tensor, Tape), NnError> {
        let (out, tape, _) = self.forward_recording(x)?;
        Ok((out, tape))
    }

    #[allow(clippy::type_complexity)]
    fn forward_recording(&self, x: &Tensor) -> Result<(Tensor, Tape, Vec<Option<(Vec<f64>, Vec<f64>)>>), NnError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    let (out, cache) = d.forward_cached(&h)?;
                    caches.push(Cache::Dense(cache));
                    stats.push(None);
                    out
                }
                Layer::BatchNorm(b) => {
                    let (out, cache, s) = b.train_forward(&h)?;
                    caches.push(Cache::BatchNorm(cache));
                    stats.push(Some(s));
                    out
                }
                Layer::Embedding(e) => {
                    let (out, cache) = e.forward_cached(&h)?;
                    caches.push(Cache::Embedding(cache));
                    stats.push(None);
                    out
                }
            };
        }
        Ok((h, Tape { caches }, stats))
    }

    /// Reverse pass over `tape`. Returns the input gradient and parameter
    /// gradients ordered like [`Network::params`].
    pub fn backward(&self, tape: &Tape, upstream: &Tensor, attach: OutputGrad) -> Result<(Tensor, Gradients), NnError> {
        if tape.caches.len() != self.layers.len() {
            return Err(NnError::Shape("tape does not belong to this network".into()));
        }
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut g = upstream.clone();
        let last_dense = self.layers.iter().rposition(|l| matches!(l, Layer::Dense(_)));
        for (i, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            match (layer, cache) {
                (Layer::Dense(d), Cache::Dense(c)) => {
                    let skip = attach == OutputGrad::PreActivation && Some(i) == last_dense;
                    let (dx, dw, db) = d.backward_cached(c, &g, skip);
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    g = dx;
                }
                (Layer::BatchNorm(b), Cache::BatchNorm(c)) => {
                    let (dx, dgamma, dbeta) = b.backward_cached(c, &g);
                    grads_rev.push(dbeta);
                    grads_rev.push(dgamma);
                    g = dx;
                }
                (Layer::Embedding(e), Cache::Embedding(c)) => {
                    let (dx, dt) = e.backward_cached(c, &g);
                    grads_rev.push(dt);
                    g = dx;
                }
                _ => return Err(NnError::Shape("tape does not belong to this network".into())),
            }
        }
        grads_rev.reverse();
        Ok((g, Gradients(grads_rev)))
    }

    /// Trainable parameter tensors, flattened.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.data());
                    out.push(&d.bias[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&b.gamma[..]);
                    out.push(&b.beta[..]);
                }
                Layer::Embedding(e) => out.push(e.table.data()),
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.data_mut());
                    out.push(&mut d.bias[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma[..]);
                    out.push(&mut b.beta[..]);
                }
                Layer::Embedding(e) => out.push(e.table.data_mut()),
            }
        }
        out
    }

    /// Dotted names matching [`Network::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(_) => {
                    out.push(format!("layers.{i}.weight"));
                    out.push(format!("layers.{i}.bias"));
                }
                Layer::BatchNorm(_) => {
                    out.push(format!("layers.{i}.gamma"));
                    out.push(format!("layers.{i}.beta"));
                }
                Layer::Embedding(_) => out.push(format!("layers.{i}.table")),
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn architecture(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|layer| match layer {
                Layer::Dense(d) => LayerSpec::Dense {
                    inputs: d.inputs(),
                    outputs: d.outputs(),
                    activation: d.activation,
                },
                Layer::BatchNorm(b) => LayerSpec::BatchNorm {
                    features: b.features(),
                    epsilon: b.epsilon,
                    momentum: b.momentum,
                },
                Layer::Embedding(e) => LayerSpec::Embedding {
                    categories: e.categories(),
                    dim: e.dim(),
                },
            })
            .collect()
    }

    /// All parameters plus batch-norm running statistics, flattened in
    /// layer order.
    pub fn state_blob(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weight.data());
                    out.extend_from_slice(&d.bias);
                }
                Layer::BatchNorm(b) => {
                    out.extend_from_slice(&b.gamma);
                    out.extend_from_slice(&b.beta);
                    out.extend_from_slice(&b.running_mean);
                    out.extend_from_slice(&b.running_var);
                }
                Layer::Embedding(e) => out.extend_from_slice(e.table.data()),
            }
        }
        out
    }

    pub fn state_len(arch: &[LayerSpec]) -> usize {
        arch.iter()
            .map(|s| match *s {
                LayerSpec::Dense { inputs, outputs, .. } => inputs * outputs + outputs,
                LayerSpec::BatchNorm { features, .. } => 4 * features,
                LayerSpec::Embedding { categories, dim } => categories * dim,
            })
            .sum()
    }

    /// Rebuilds a network from [`Network::architecture`] and
    /// [`Network::state_blob`].
    pub fn from_state(input_dim: usize, arch: &[LayerSpec], blob: &[f64]) -> Result<Self, NnError> {
        let expected = Self::state_len(arch);
        if blob.len() != expected {
            return Err(NnError::StateSize {
                expected,
                got: blob.len(),
            });
        }
        let mut rest = blob;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let mut layers = Vec::with_capacity(arch.len());
        for spec in arch {
            layers.push(match *spec {
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    activation,
                } => Layer::Dense(Dense {
                    weight: Tensor::from_vec(inputs, outputs, take(inputs * outputs))?,
                    bias: take(outputs),
                    activation,
                }),
                LayerSpec::BatchNorm {
                    features,
                    epsilon,
                    momentum,
                } => Layer::BatchNorm(BatchNorm {
                    gamma: take(features),
                    beta: take(features),
                    running_mean: take(features),
                    running_var: take(features),
                    epsilon,
                    momentum,
                }),
                LayerSpec::Embedding { categories, dim } => Layer::Embedding(Embedding {
                    table: Tensor::from_vec(categories, dim, take(categories * dim))?,
                }),
            });
        }
        Self::new(input_dim, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Domain};

    fn probe(rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|i| ((i * 37 % 17) as f64 - 8.0) / 5.0).collect();
        Tensor::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn mlp_shapes_and_validation() {
        let mut rng = derive(3, Domain::Init, 0, 0);
        let net = Network::mlp(4, 2, 8, true, 2, Activation::Identity, &mut rng).unwrap();
        assert_eq!(net.input_dim(), 4);
        assert_eq!(net.output_dim(), 2);
        assert_eq!(net.layers().len(), 5);
        assert_eq!(net.param_count(), 4 * 8 + 8 + 16 + 8 * 8 + 8 + 16 + 8 * 2 + 2);
        assert_eq!(net.params().len(), net.param_names().len());
        assert!(net.predict(&probe(3, 5)).is_err());

        let bad = vec![Layer::Dense(Dense::new(3, 2, Activation::Gelu, &mut rng))];
        assert!(Network::new(4, bad).is_err());
    }

    #[test]
    fn state_round_trip_is_output_identical() {
        let mut rng = derive(4, Domain::Init, 0, 0);
        let mut net = Network::mlp(3, 2, 6, true, 1, Activation::Identity, &mut rng).unwrap();
        net.forward_train(&probe(8, 3)).unwrap();
        let rebuilt = Network::from_state(3, &net.architecture(), &net.state_blob()).unwrap();
        assert_eq!(rebuilt, net);
        let x = probe(5, 3);
        assert_eq!(rebuilt.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert!(Network::from_state(3, &net.architecture(), &[0.0; 3]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = derive(5, Domain::Init, 0, 0);
        let net = Network::mlp(3, 3, 16, true, 2, Activation::Identity, &mut rng).unwrap();
        let x = probe(9, 3);
        let (a, _) = net.forward_frozen(&x).unwrap();
        let (b, _) = net.forward_frozen(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn embedding_network_builds() {
        let mut rng = derive(6, Domain::Init, 0, 0);
        let front = vec![Layer::Embedding(Embedding::new(30, 4, &mut rng))];
        let net = Network::mlp_from(2, front, 1, 8, true, 1, Activation::Identity, &mut rng).unwrap();
        assert_eq!(net.output_dim(), 1);
        let x = Tensor::from_rows(&[vec![0.0, 0.5], vec![29.0, 0.1]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().shape(), (2, 1));
    }
}
