use serde::{Deserialize, Serialize};

use super::{Gradients, Network, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators, shaped like the network's parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, net: &Network) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            config,
            state: AdamState {
                step: 0,
                first: zeros.clone(),
                second: zeros,
            },
        }
    }

    pub fn from_state(config: AdamConfig, state: AdamState, net: &Network) -> Result<Self, NnError> {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let ok = |acc: &[Vec<f64>]| acc.len() == shapes.len() && acc.iter().zip(&shapes).all(|(a, &n)| a.len() == n);
        if !ok(&state.first) || !ok(&state.second) {
            return Err(NnError::Shape("optimizer state does not match the network".into()));
        }
        Ok(Self { config, state })
    }

    /// Applies one update. Gradients are checked for finiteness before any
    /// parameter is touched.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
        let names = net.param_names();
        if grads.0.len() != names.len() {
            return Err(NnError::Shape(format!(
                "{} gradient buffers for {} parameters",
                grads.0.len(),
                names.len()
            )));
        }
        for (name, g) in names.iter().zip(&grads.0) {
            if let Some(index) = g.iter().position(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    param: name.clone(),
                    index,
                });
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.state.step += 1;
        let t = self.state.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.state.first)
            .zip(&mut self.state.second)
        {
            if p.len() != g.len() {
                return Err(NnError::Shape("gradient buffer size mismatch".into()));
            }
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
