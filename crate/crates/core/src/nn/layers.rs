use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use super::NnError;
use crate::specfun::{erf, std_normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu(x: &Tensor) -> Tensor {
    x.map(gelu_scalar)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `activation(x·W + b)` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

pub(crate) struct DenseCache {
    input: Tensor,
    // dy/d(pre) for GELU and sigmoid, empty for identity
    deriv: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weight: Tensor::from_vec(inputs, outputs, data).expect("sized by construction"),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    fn pre_activation(&self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.cols() != self.inputs() {
            return Err(NnError::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let (n, k, m) = (x.rows(), self.inputs(), self.outputs());
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            out.row_mut(i).copy_from_slice(&self.bias);
        }
        gemm(n, k, m, x.data(), false, self.weight.data(), false, 1.0, out.data_mut());
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut out = self.pre_activation(x)?;
        match self.activation {
            Activation::Gelu => out.data_mut().iter_mut().for_each(|v| *v = gelu_scalar(*v)),
            Activation::Sigmoid => out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Identity => {}
        }
        Ok(out)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, DenseCache), NnError> {
        let mut out = self.pre_activation(x)?;
        let deriv = match self.activation {
            Activation::Gelu => out
                .data_mut()
                .iter_mut()
                .map(|v| {
                    let z = *v;
                    let cdf = 0.5 * (1.0 + erf(z * std::f64::consts::FRAC_1_SQRT_2));
                    *v = z * cdf;
                    cdf + z * std_normal_pdf(z)
                })
                .collect(),
            Activation::Sigmoid => out
                .data_mut()
                .iter_mut()
                .map(|v| {
                    let s = sigmoid(*v);
                    *v = s;
                    s * (1.0 - s)
                })
                .collect(),
            Activation::Identity => Vec::new(),
        };
        Ok((
            out,
            DenseCache {
                input: x.clone(),
                deriv,
            },
        ))
    }

    /// Gradients `(input, weight, bias)`. With `skip_activation` the
    /// upstream gradient is taken with respect to the pre-activation.
    pub(crate) fn backward_cached(
        &self,
        cache: &DenseCache,
        upstream: &Tensor,
        skip_activation: bool,
    ) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (n, k, m) = (cache.input.rows(), self.inputs(), self.outputs());
        let mut dpre = upstream.clone();
        if !skip_activation && !cache.deriv.is_empty() {
            dpre.data_mut().iter_mut().zip(&cache.deriv).for_each(|(g, d)| *g *= d);
        }
        let mut dw = vec![0.0; k * m];
        gemm(k, n, m, cache.input.data(), true, dpre.data(), false, 0.0, &mut dw);
        let mut db = vec![0.0; m];
        for i in 0..n {
            for (acc, g) in db.iter_mut().zip(dpre.row(i)) {
                *acc += g;
            }
        }
        let mut dx = Tensor::zeros(n, k);
        gemm(n, m, k, dpre.data(), false, self.weight.data(), true, 0.0, dx.data_mut());
        (dx, dw, db)
    }

    /// Stand-alone backward pass: recomputes the cache from `x`.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
        let (out, cache) = self.forward_cached(x)?;
        if upstream.shape() != out.shape() {
            return Err(NnError::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        Ok(self.backward_cached(&cache, upstream, false))
    }
}

/// Per-feature batch normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

pub(crate) struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            epsilon: 1e-5,
            momentum: 0.99,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<(), NnError> {
        if x.cols() != self.features() {
            return Err(NnError::Shape(format!(
                "batch norm over {} features got {} columns",
                self.features(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        match mode {
            Mode::Infer => self.infer(x),
            Mode::Train => {
                let (out, _, stats) = self.train_forward(x)?;
                self.update_running(&stats);
                Ok(out)
            }
        }
    }

    pub(crate) fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check(x)?;
        let mut out = x.clone();
        let scale: Vec<f64> = self
            .gamma
            .iter()
            .zip(&self.running_var)
            .map(|(g, v)| g / (v + self.epsilon).sqrt())
            .collect();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        Ok(out)
    }

    /// Output, cache and the `(mean, unbiased variance)` batch statistics.
    pub(crate) fn train_forward(&self, x: &Tensor) -> Result<(Tensor, BatchNormCache, (Vec<f64>, Vec<f64>)), NnError> {
        self.check(x)?;
        let (n, f) = x.shape();
        if n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let mut mean = vec![0.0; f];
        for i in 0..n {
            for (acc, v) in mean.iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; f];
        for i in 0..n {
            for ((acc, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut xhat = Tensor::zeros(n, f);
        let mut out = Tensor::zeros(n, f);
        for i in 0..n {
            let xr = x.row(i);
            let hr = xhat.row_mut(i);
            let or = out.row_mut(i);
            for j in 0..f {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
                or[j] = self.gamma[j] * hr[j] + self.beta[j];
            }
        }
        let unbiased = var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect();
        Ok((out, BatchNormCache { xhat, inv_std }, (mean, unbiased)))
    }

    pub(crate) fn update_running(&mut self, (mean, var): &(Vec<f64>, Vec<f64>)) {
        let mo = self.momentum;
        for j in 0..self.features() {
            self.running_mean[j] = mo * self.running_mean[j] + (1.0 - mo) * mean[j];
            self.running_var[j] = mo * self.running_var[j] + (1.0 - mo) * var[j];
        }
    }

    /// Gradients `(input, gamma, beta)`.
    pub(crate) fn backward_cached(&self, cache: &BatchNormCache, upstream: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (n, f) = upstream.shape();
        let mut dgamma = vec![0.0; f];
        let mut dbeta = vec![0.0; f];
        for i in 0..n {
            let (g, h) = (upstream.row(i), cache.xhat.row(i));
            for j in 0..f {
                dgamma[j] += g[j] * h[j];
                dbeta[j] += g[j];
            }
        }
        // dxhat = g·γ; dx = inv_std/n · (n·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
        let sum_dxhat: Vec<f64> = (0..f).map(|j| dbeta[j] * self.gamma[j]).collect();
        let sum_dxhat_xhat: Vec<f64> = (0..f).map(|j| dgamma[j] * self.gamma[j]).collect();
        let nf = n as f64;
        let mut dx = Tensor::zeros(n, f);
        for i in 0..n {
            let (g, h) = (upstream.row(i), cache.xhat.row(i));
            let out = dx.row_mut(i);
            for j in 0..f {
                let dxhat = g[j] * self.gamma[j];
                out[j] = cache.inv_std[j] / nf * (nf * dxhat - sum_dxhat[j] - h[j] * sum_dxhat_xhat[j]);
            }
        }
        (dx, dgamma, dbeta)
    }
}

/// Trainable lookup table. Column 0 of the input carries a category index;
/// the output is the category's row followed by the remaining input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Tensor,
}

pub(crate) struct EmbeddingCache {
    indices: Vec<usize>,
    passthrough: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(categories: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..categories * dim).map(|_| rng.random_range(-0.05..0.05)).collect();
        Self {
            table: Tensor::from_vec(categories, dim, data).expect("sized by construction"),
        }
    }

    pub fn categories(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, EmbeddingCache), NnError> {
        if x.cols() < 1 {
            return Err(NnError::Shape("embedding input has no index column".into()));
        }
        let passthrough = x.cols() - 1;
        let mut out = Tensor::zeros(x.rows(), self.dim() + passthrough);
        let mut indices = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let raw = x.get(i, 0);
            let idx = raw as usize;
            if raw < 0.0 || raw.fract() != 0.0 || idx >= self.categories() {
                return Err(NnError::Shape(format!(
                    "embedding index {raw} outside 0..{}",
                    self.categories()
                )));
            }
            indices.push(idx);
            let row = out.row_mut(i);
            row[..self.dim()].copy_from_slice(self.table.row(idx));
            row[self.dim()..].copy_from_slice(&x.row(i)[1..]);
        }
        Ok((out, EmbeddingCache { indices, passthrough }))
    }

    /// Gradients `(input, table)`; the index column receives zero gradient.
    pub(crate) fn backward_cached(&self, cache: &EmbeddingCache, upstream: &Tensor) -> (Tensor, Vec<f64>) {
        let dim = self.dim();
        let mut dtable = vec![0.0; self.table.data().len()];
        let mut dx = Tensor::zeros(upstream.rows(), cache.passthrough + 1);
        for (i, &idx) in cache.indices.iter().enumerate() {
            let g = upstream.row(i);
            for (acc, v) in dtable[idx * dim..(idx + 1) * dim].iter_mut().zip(&g[..dim]) {
                *acc += v;
            }
            dx.row_mut(i)[1..].copy_from_slice(&g[dim..]);
        }
        (dx, dtable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Domain};

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(1.0) - 0.841_344_746_1).abs() < 1e-10);
        assert!((gelu_scalar(40.0) - 40.0).abs() < 1e-12);
        assert!(gelu_scalar(-40.0).abs() < 1e-12);
    }

    #[test]
    fn dense_identity_and_bias() {
        let mut rng = derive(0, Domain::Init, 0, 0);
        let mut layer = Dense::new(2, 2, Activation::Identity, &mut rng);
        layer.weight = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, -2.0], vec![5.0, 1.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);

        layer.weight = Tensor::zeros(2, 2);
        layer.bias = vec![0.5, -1.5];
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.row(0), &[0.5, -1.5]);
        assert_eq!(y.row(1), &[0.5, -1.5]);

        layer.weight = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        layer.bias = vec![0.0, 0.0];
        layer.activation = Activation::Gelu;
        let y = layer.forward(&Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap()).unwrap();
        assert!((y.get(0, 0) - 0.8413).abs() < 1e-4);
        assert!((y.get(0, 1) + 0.1587).abs() < 1e-4);

        assert!(layer.forward(&Tensor::zeros(1, 3)).is_err());
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = derive(1, Domain::Init, 0, 0);
        let layer = Dense::new(3, 2, Activation::Gelu, &mut rng);
        let x = Tensor::from_rows(&[vec![0.3, -0.7, 1.1], vec![-0.2, 0.4, 0.9]]).unwrap();
        let up = Tensor::from_rows(&[vec![1.0, -0.5], vec![0.25, 2.0]]).unwrap();
        let (dx, dw, _db) = layer.backward(&x, &up).unwrap();
        let objective = |l: &Dense, x: &Tensor| -> f64 {
            let y = l.forward(x).unwrap();
            y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for idx in 0..6 {
            let mut plus = layer.clone();
            plus.weight.data_mut()[idx] += h;
            let mut minus = layer.clone();
            minus.weight.data_mut()[idx] -= h;
            let num = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
            assert!((num - dw[idx]).abs() < 1e-8);
        }
        for idx in 0..6 {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let num = (objective(&layer, &xp) - objective(&layer, &xm)) / (2.0 * h);
            assert!((num - dx.data()[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let mut bn = BatchNorm::new(2);
        let x = Tensor::from_rows(&(0..8).map(|i| vec![i as f64, (i * i) as f64 - 3.0]).collect::<Vec<_>>()).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..8).map(|i| y.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / 8.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-10);
            // epsilon shrinks the variance slightly below one
            assert!((var - 1.0).abs() < 1e-5);
        }
        // running stats moved from (0, 1) towards the batch
        assert!((bn.running_mean[0] - 0.01 * 3.5).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_constant_feature_and_infer() {
        let mut bn = BatchNorm::new(1);
        bn.beta = vec![0.7];
        let x = Tensor::from_rows(&vec![vec![4.2]; 5]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.7).abs() < 1e-12));

        let bn = BatchNorm::new(3);
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        let y = bn.infer(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5 * b.abs());
        }
    }

    #[test]
    fn batchnorm_rejects_single_row_in_training() {
        let mut bn = BatchNorm::new(2);
        let x = Tensor::zeros(1, 2);
        assert!(matches!(bn.forward(&x, Mode::Train), Err(NnError::BatchTooSmall(1))));
        assert!(bn.forward(&x, Mode::Infer).is_ok());
    }

    #[test]
    fn embedding_lookup_and_scatter() {
        let mut rng = derive(2, Domain::Init, 0, 0);
        let emb = Embedding::new(4, 3, &mut rng);
        let x = Tensor::from_rows(&[vec![2.0, 0.5], vec![0.0, 0.1], vec![2.0, 0.9]]).unwrap();
        let (y, cache) = emb.forward_cached(&x).unwrap();
        assert_eq!(y.cols(), 4);
        assert_eq!(&y.row(0)[..3], emb.table.row(2));
        assert_eq!(y.get(2, 3), 0.9);
        let up = Tensor::from_rows(&[vec![1.0; 4], vec![2.0; 4], vec![3.0; 4]]).unwrap();
        let (dx, dt) = emb.backward_cached(&cache, &up);
        assert_eq!(&dt[6..9], &[4.0, 4.0, 4.0]);
        assert_eq!(&dt[0..3], &[2.0, 2.0, 2.0]);
        assert_eq!(dx.row(1), &[0.0, 2.0]);
        let bad = Tensor::from_rows(&[vec![4.0, 0.0]]).unwrap();
        assert!(emb.forward_cached(&bad).is_err());
    }
}
