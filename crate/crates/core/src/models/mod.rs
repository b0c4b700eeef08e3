//! The two channel surrogates and everything around them.
//!
//! The FNN maps a condition (category encoding plus quantile `r`) straight to
//! a scaled received value, so it learns the inverse CDF. The cGAN generator
//! maps `[z | c]` to a value and is trained against a discriminator that sees
//! `[x | c]`. Both emit values in the dataset's scaled domain.

mod cgan;
mod checkpoint;
mod eval;
mod fnn;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::{Conditioner, DataError, DatasetMeta};
use crate::metrics::MetricError;
use crate::nn::{Adam, Network, NnError, Tensor};
use crate::rng::StreamRng;

pub use cgan::{build_cgan, generator_grad_check, train_cgan, CganConfig, GanState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use eval::{evaluate, evaluate_values, select_checkpoint, EvalPlan, EvalSet, Evaluation};
pub use fnn::{build_fnn, train_fnn, FnnConfig, FnnState};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite { what: &'static str, epoch: u64, batch: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint format version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("{what} fingerprint mismatch: checkpoint has {found}, run has {expected}")]
    Fingerprint {
        what: &'static str,
        expected: String,
        found: String,
    },
}

pub(crate) fn config_err(msg: impl Into<String>) -> ModelError {
    ModelError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fnn,
    Cgan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Fnn(FnnConfig),
    Cgan(CganConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Fnn(_) => ModelKind::Fnn,
            Self::Cgan(_) => ModelKind::Cgan,
        }
    }

    pub fn encoding(&self) -> crate::datagen::ConditionEncoding {
        match self {
            Self::Fnn(c) => c.encoding,
            Self::Cgan(c) => c.encoding,
        }
    }

    /// SHA-256 of the configuration with the training budget fields
    /// removed, so a run may be resumed with a larger budget.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("epochs");
            obj.remove("checkpoint_every");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// Trainable state of either surrogate.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Fnn {
        net: Network,
        adam: Adam,
    },
    Cgan {
        generator: Network,
        discriminator: Network,
        g_adam: Adam,
        d_adam: Adam,
    },
}

/// A saved model with enough context to generate and to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Completed epochs (FNN) or iterations (cGAN).
    pub epoch: u64,
    pub model: Model,
    pub config: ModelConfig,
    pub dataset_fingerprint: String,
    /// Metadata of the training set.
    pub data_meta: DatasetMeta,
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn conditioner(&self) -> Result<Conditioner, ModelError> {
        Ok(Conditioner::new(&self.data_meta, self.config.encoding())?)
    }

    /// The network that produces samples.
    pub fn sampler(&self) -> &Network {
        match &self.model {
            Model::Fnn { net, .. } => net,
            Model::Cgan { generator, .. } => generator,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match &self.config {
            ModelConfig::Fnn(_) => 0,
            ModelConfig::Cgan(c) => c.latent_dim,
        }
    }

    /// Rejects resuming under a different configuration or dataset.
    pub fn check_compatible(&self, config: &ModelConfig, dataset_fingerprint: &str) -> Result<(), ModelError> {
        let (found, expected) = (self.config.fingerprint(), config.fingerprint());
        if found != expected {
            return Err(ModelError::Fingerprint {
                what: "config",
                expected,
                found,
            });
        }
        if self.dataset_fingerprint != dataset_fingerprint {
            return Err(ModelError::Fingerprint {
                what: "dataset",
                expected: dataset_fingerprint.to_string(),
                found: self.dataset_fingerprint.clone(),
            });
        }
        Ok(())
    }
}

/// Rows evaluated per forward pass when generating.
pub const GENERATE_CHUNK: usize = 8192;

/// Runs the sampler over `conditions` in inference mode. For a cGAN one
/// latent row per condition row is drawn from `latent`; an FNN ignores it.
pub fn generate(ckpt: &Checkpoint, conditions: &Tensor, latent: &mut StreamRng) -> Result<Tensor, ModelError> {
    generate_with(ckpt.sampler(), ckpt.latent_dim(), conditions, latent)
}

pub(crate) fn generate_with(
    net: &Network,
    latent_dim: usize,
    conditions: &Tensor,
    latent: &mut StreamRng,
) -> Result<Tensor, ModelError> {
    if conditions.cols() + latent_dim != net.input_dim() {
        return Err(config_err(format!(
            "conditions have {} columns, model expects {}",
            conditions.cols(),
            net.input_dim() - latent_dim
        )));
    }
    let mut out: Option<Tensor> = None;
    let idx: Vec<usize> = (0..conditions.rows()).collect();
    for chunk in idx.chunks(GENERATE_CHUNK) {
        let c = conditions.select_rows(chunk);
        let input = if latent_dim > 0 {
            cgan::latent(chunk.len(), latent_dim, latent).hcat(&c)?
        } else {
            c
        };
        let y = net.predict(&input)?;
        out = Some(match out {
            None => y,
            Some(acc) => acc.vcat(&y)?,
        });
    }
    Ok(out.unwrap_or_else(|| Tensor::zeros(0, net.output_dim())))
}

/// Tab-separated training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub columns: Vec<String>,
    pub rows: Vec<(u64, Vec<f64>)>,
    pub warnings: Vec<String>,
    /// Epoch (or iteration) counter after training.
    pub epoch: u64,
}

impl TrainReport {
    fn new(kind: ModelKind, columns: &[&str], epoch: u64) -> Self {
        Self {
            kind,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            warnings: Vec::new(),
            epoch,
        }
    }

    pub fn to_delimited(&self) -> String {
        let mut s = format!("epoch\t{}\n", self.columns.join("\t"));
        for (e, vals) in &self.rows {
            s.push_str(&e.to_string());
            for v in vals {
                s.push_str(&format!("\t{v:e}"));
            }
            s.push('\n');
        }
        s
    }

    /// Last logged value of column `name`.
    pub fn last(&self, name: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows.last().map(|(_, v)| v[i])
    }

    pub fn first(&self, name: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows.first().map(|(_, v)| v[i])
    }
}

/// Receives checkpoints as training emits them.
pub type CheckpointSink<'a> = dyn FnMut(Checkpoint) -> Result<(), ModelError> + 'a;

/// Fisher–Yates shuffle of `0..n`.
pub(crate) fn permutation(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    use rand::Rng;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    idx
}
