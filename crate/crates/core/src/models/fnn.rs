use serde::{Deserialize, Serialize};

use super::{config_err, permutation, Checkpoint, CheckpointSink, Model, ModelConfig, ModelError, ModelKind, TrainReport};
use crate::datagen::{ConditionEncoding, Conditioner, Dataset};
use crate::nn::{Activation, Adam, AdamConfig, Embedding, Layer, Network, OutputGrad, RegressionLoss, Tensor};
use crate::rng::{derive, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FnnConfig {
    pub num_layer: usize,
    pub num_unit: usize,
    pub batch_norm: bool,
    pub loss: RegressionLoss,
    /// Head width; `None` matches the dataset's target width.
    pub out_dim: Option<usize>,
    pub epochs: u64,
    pub batch_size: usize,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub encoding: ConditionEncoding,
    /// Embedding width when `encoding` is `Embedding`.
    pub embed_dim: usize,
}

impl Default for FnnConfig {
    fn default() -> Self {
        Self {
            num_layer: 4,
            num_unit: 128,
            batch_norm: true,
            loss: RegressionLoss::Mse,
            out_dim: None,
            epochs: 500,
            batch_size: 512,
            checkpoint_every: 1,
            seed: 0,
            adam: AdamConfig::default(),
            encoding: ConditionEncoding::OneHot,
            embed_dim: 8,
        }
    }
}

impl FnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_layer == 0 || self.num_unit == 0 {
            return Err(config_err("FNN needs at least one hidden layer of width ≥ 1"));
        }
        if self.out_dim.is_some_and(|d| !(1..=2).contains(&d)) {
            return Err(config_err("FNN head width must be 1 or 2"));
        }
        if self.batch_size < 2 {
            return Err(config_err("batch size must be at least 2"));
        }
        if self.checkpoint_every == 0 {
            return Err(config_err("checkpoint_every must be positive"));
        }
        if self.encoding == ConditionEncoding::Embedding && self.embed_dim == 0 {
            return Err(config_err("embedding width must be positive"));
        }
        Ok(())
    }

    fn head_width(&self, data_dim: usize) -> Result<usize, ModelError> {
        let w = self.out_dim.unwrap_or(data_dim);
        if w < data_dim {
            return Err(config_err(format!("head width {w} cannot fit {data_dim} targets")));
        }
        Ok(w)
    }
}

/// First layer for an embedding-encoded condition, if any.
pub(super) fn front_layers(conditioner: &Conditioner, embed_dim: usize, rng: &mut crate::rng::StreamRng) -> Vec<Layer> {
    match conditioner.encoding {
        ConditionEncoding::Embedding => vec![Layer::Embedding(Embedding::new(conditioner.n_categories, embed_dim, rng))],
        ConditionEncoding::OneHot => Vec::new(),
    }
}

/// Hidden blocks of GELU dense layers (each followed by batch norm when
/// enabled) and a linear head.
pub fn build_fnn(config: &FnnConfig, conditioner: &Conditioner, data_dim: usize) -> Result<Network, ModelError> {
    config.validate()?;
    let mut rng = derive(config.seed, Domain::Init, 0, 0);
    let front = front_layers(conditioner, config.embed_dim, &mut rng);
    Ok(Network::mlp_from(
        conditioner.dim(),
        front,
        config.num_layer,
        config.num_unit,
        config.batch_norm,
        config.head_width(data_dim)?,
        Activation::Identity,
        &mut rng,
    )?)
}

/// Network, optimizer and epoch counter of an FNN run.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnState {
    pub net: Network,
    pub adam: Adam,
    pub epoch: u64,
}

impl FnnState {
    pub fn new(config: &FnnConfig, train: &Dataset) -> Result<Self, ModelError> {
        let conditioner = Conditioner::new(&train.meta, config.encoding)?;
        let net = build_fnn(config, &conditioner, train.out_dim())?;
        let adam = Adam::new(config.adam, &net);
        Ok(Self { net, adam, epoch: 0 })
    }

    /// Continues from `ckpt`, which must come from the same configuration
    /// (budget aside) and training set.
    pub fn resume(ckpt: &Checkpoint, config: &FnnConfig, train: &Dataset) -> Result<Self, ModelError> {
        ckpt.check_compatible(&ModelConfig::Fnn(config.clone()), &train.fingerprint())?;
        match &ckpt.model {
            Model::Fnn { net, adam } => Ok(Self {
                net: net.clone(),
                adam: Adam {
                    config: config.adam,
                    state: adam.state.clone(),
                },
                epoch: ckpt.epoch,
            }),
            Model::Cgan { .. } => Err(config_err("checkpoint holds a cGAN, not an FNN")),
        }
    }

    fn checkpoint(&self, config: &FnnConfig, train: &Dataset, fingerprint: &str) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            model: Model::Fnn {
                net: self.net.clone(),
                adam: self.adam.clone(),
            },
            config: ModelConfig::Fnn(config.clone()),
            dataset_fingerprint: fingerprint.to_string(),
            data_meta: train.meta.clone(),
        }
    }
}

/// Target matrix sized to the head; a 1-dim target is repeated across a
/// 2-wide head.
fn head_targets(ds: &Dataset, idx: &[usize], width: usize) -> Tensor {
    let t = ds.targets(idx);
    if t.cols() == width {
        return t;
    }
    let data = t.data().iter().flat_map(|&v| std::iter::repeat_n(v, width)).collect();
    Tensor::from_vec(idx.len(), width, data).expect("consistent width")
}

fn eval_loss(
    net: &Network,
    loss: RegressionLoss,
    ds: &Dataset,
    conditioner: &Conditioner,
) -> Result<Option<f64>, ModelError> {
    if ds.is_empty() {
        return Ok(None);
    }
    let width = net.output_dim();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut sq = 0.0;
    for chunk in all.chunks(super::GENERATE_CHUNK) {
        let pred = net.predict(&ds.inputs(conditioner, chunk)?)?;
        let y = head_targets(ds, chunk, width);
        sq += pred.data().iter().zip(y.data()).map(|(p, r)| (p - r) * (p - r)).sum::<f64>();
    }
    let mse = sq / (ds.len() * width) as f64;
    Ok(Some(match loss {
        RegressionLoss::Mse => mse,
        RegressionLoss::Rmse => mse.sqrt(),
    }))
}

/// Mini-batch Adam on the configured loss until `config.epochs` epochs have
/// been completed. A trailing batch of a single sample is skipped because
/// batch normalization needs two rows. Each epoch logs mean training loss
/// and validation loss; checkpoints go to `sink` every `checkpoint_every`
/// epochs.
pub fn train_fnn(
    state: &mut FnnState,
    train: &Dataset,
    val: &Dataset,
    config: &FnnConfig,
    sink: &mut CheckpointSink<'_>,
) -> Result<TrainReport, ModelError> {
    config.validate()?;
    if train.len() < 2 {
        return Err(config_err("training set needs at least two samples"));
    }
    if val.meta.approach != train.meta.approach || val.meta.table != train.meta.table {
        return Err(config_err("validation set does not match the training set"));
    }
    let conditioner = Conditioner::new(&train.meta, config.encoding)?;
    let width = state.net.output_dim();
    if state.net.input_dim() != conditioner.dim() || width < train.out_dim() {
        return Err(config_err("network shape does not match the dataset"));
    }
    let fingerprint = train.fingerprint();
    let mut report = TrainReport::new(ModelKind::Fnn, &["train_loss", "val_loss"], state.epoch);
    if state.epoch == 0 {
        let initial = eval_loss(&state.net, config.loss, train, &conditioner)?.unwrap_or(f64::NAN);
        let val_loss = eval_loss(&state.net, config.loss, val, &conditioner)?.unwrap_or(f64::NAN);
        report.rows.push((0, vec![initial, val_loss]));
    }
    while state.epoch < config.epochs {
        let epoch = state.epoch + 1;
        let mut rng = derive(config.seed, Domain::Shuffle, epoch as u32, (epoch >> 32) as u16);
        let order = permutation(train.len(), &mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let x = train.inputs(&conditioner, idx)?;
            let y = head_targets(train, idx, width);
            let (out, tape) = state.net.forward_train(&x)?;
            let loss = config.loss.value(&out, &y)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFinite {
                    what: "training loss",
                    epoch,
                    batch: b,
                });
            }
            let upstream = config.loss.grad(&out, &y)?;
            let (_, grads) = state.net.backward(&tape, &upstream, OutputGrad::Output)?;
            state.adam.step(&mut state.net, &grads).map_err(|e| match e {
                crate::nn::NnError::NonFiniteGradient { .. } => ModelError::NonFinite {
                    what: "gradient",
                    epoch,
                    batch: b,
                },
                e => e.into(),
            })?;
            let weight = match config.loss {
                RegressionLoss::Mse => loss,
                RegressionLoss::Rmse => loss * loss,
            };
            total += weight * idx.len() as f64;
            seen += idx.len();
        }
        state.epoch = epoch;
        let mean = total / seen as f64;
        let train_loss = match config.loss {
            RegressionLoss::Mse => mean,
            RegressionLoss::Rmse => mean.sqrt(),
        };
        let val_loss = eval_loss(&state.net, config.loss, val, &conditioner)?.unwrap_or(f64::NAN);
        report.rows.push((epoch, vec![train_loss, val_loss]));
        if epoch % config.checkpoint_every == 0 {
            sink(state.checkpoint(config, train, &fingerprint))?;
        }
    }
    report.epoch = state.epoch;
    Ok(report)
}
