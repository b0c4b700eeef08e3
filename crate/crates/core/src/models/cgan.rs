use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::fnn::front_layers;
use super::{config_err, Checkpoint, CheckpointSink, Model, ModelConfig, ModelError, ModelKind, TrainReport};
use crate::datagen::{ConditionEncoding, Conditioner, Dataset};
use crate::nn::{
    bce, bce_logit_grad, check_gradients, Activation, Adam, AdamConfig, GradCheckReport, Gradients, Network, NnError,
    OutputGrad, Tensor,
};
use crate::rng::{derive, Domain, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CganConfig {
    pub latent_dim: usize,
    pub g_layers: usize,
    pub g_units: usize,
    pub d_layers: usize,
    pub d_units: usize,
    /// Head width of the generator; `None` matches the dataset.
    pub out_dim: Option<usize>,
    /// Training iterations, one minibatch each.
    pub epochs: u64,
    pub checkpoint_every: u64,
    pub batch_size: usize,
    pub d_steps: usize,
    pub g_steps: usize,
    pub seed: u64,
    pub g_adam: AdamConfig,
    pub d_adam: AdamConfig,
    pub encoding: ConditionEncoding,
    pub embed_dim: usize,
}

impl Default for CganConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            g_layers: 4,
            g_units: 128,
            d_layers: 4,
            d_units: 128,
            out_dim: None,
            epochs: 50_000,
            checkpoint_every: 100,
            batch_size: 256,
            d_steps: 1,
            g_steps: 1,
            seed: 0,
            g_adam: AdamConfig::with_lr(2e-4),
            d_adam: AdamConfig::with_lr(2e-4),
            encoding: ConditionEncoding::OneHot,
            embed_dim: 8,
        }
    }
}

impl CganConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_dim == 0 {
            return Err(config_err("latent_dim must be at least 1"));
        }
        if self.g_layers == 0 || self.g_units == 0 || self.d_layers == 0 || self.d_units == 0 {
            return Err(config_err("generator and discriminator need hidden layers"));
        }
        if self.out_dim.is_some_and(|d| !(1..=2).contains(&d)) {
            return Err(config_err("generator head width must be 1 or 2"));
        }
        if self.batch_size < 2 || self.checkpoint_every == 0 || self.d_steps == 0 || self.g_steps == 0 {
            return Err(config_err("batch_size ≥ 2 and positive checkpoint_every, d_steps, g_steps required"));
        }
        if self.encoding == ConditionEncoding::Embedding {
            // The discriminator would need its own embedding of the same
            // index column; keep the two players on identical inputs.
            return Err(config_err("the cGAN supports one-hot conditions only"));
        }
        Ok(())
    }
}

/// Generator, discriminator, their optimizers and the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct GanState {
    pub generator: Network,
    pub discriminator: Network,
    pub g_adam: Adam,
    pub d_adam: Adam,
    pub epoch: u64,
}

/// G: `[z | c]` → GELU blocks with batch norm → linear head.
/// D: `[x | c]` → GELU blocks without batch norm → sigmoid scalar.
pub fn build_cgan(config: &CganConfig, conditioner: &Conditioner, data_dim: usize) -> Result<GanState, ModelError> {
    config.validate()?;
    let width = config.out_dim.unwrap_or(data_dim);
    if width < data_dim {
        return Err(config_err(format!("head width {width} cannot fit {data_dim} targets")));
    }
    let mut g_rng = derive(config.seed, Domain::Init, 1, 0);
    let mut d_rng = derive(config.seed, Domain::Init, 2, 0);
    let front = front_layers(conditioner, config.embed_dim, &mut g_rng);
    let generator = Network::mlp_from(
        config.latent_dim + conditioner.dim(),
        front,
        config.g_layers,
        config.g_units,
        true,
        width,
        Activation::Identity,
        &mut g_rng,
    )?;
    let discriminator = Network::mlp(
        width + conditioner.dim(),
        config.d_layers,
        config.d_units,
        false,
        1,
        Activation::Sigmoid,
        &mut d_rng,
    )?;
    Ok(GanState {
        g_adam: Adam::new(config.g_adam, &generator),
        d_adam: Adam::new(config.d_adam, &discriminator),
        generator,
        discriminator,
        epoch: 0,
    })
}

/// `n` rows of standard normal noise.
pub(crate) fn latent(n: usize, dim: usize, rng: &mut StreamRng) -> Tensor {
    let data = (0..n * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(n, dim, data).expect("sized")
}

fn labels(n: usize, value: f64) -> Tensor {
    Tensor::from_vec(n, 1, vec![value; n]).expect("sized")
}

impl GanState {
    pub fn new(config: &CganConfig, train: &Dataset) -> Result<Self, ModelError> {
        let conditioner = Conditioner::new(&train.meta, config.encoding)?;
        build_cgan(config, &conditioner, train.out_dim())
    }

    pub fn resume(ckpt: &Checkpoint, config: &CganConfig, train: &Dataset) -> Result<Self, ModelError> {
        ckpt.check_compatible(&ModelConfig::Cgan(config.clone()), &train.fingerprint())?;
        match &ckpt.model {
            Model::Cgan {
                generator,
                discriminator,
                g_adam,
                d_adam,
            } => Ok(Self {
                generator: generator.clone(),
                discriminator: discriminator.clone(),
                g_adam: g_adam.clone(),
                d_adam: d_adam.clone(),
                epoch: ckpt.epoch,
            }),
            Model::Fnn { .. } => Err(config_err("checkpoint holds an FNN, not a cGAN")),
        }
    }

    /// One discriminator update on genuine (label 1) and generated (label 0)
    /// rows. Returns the BCE before the update.
    pub fn discriminator_step(&mut self, real: &Tensor, cond: &Tensor, z: &Tensor) -> Result<f64, ModelError> {
        let fake = self.generator.predict(&z.hcat(cond)?)?;
        let fake = fake.columns(0, real.cols());
        let x = real.hcat(cond)?.vcat(&fake.hcat(cond)?)?;
        let n = real.rows();
        let y = labels(n, 1.0).vcat(&labels(n, 0.0))?;
        let (p, tape) = self.discriminator.forward_frozen(&x)?;
        let loss = bce(&p, &y)?;
        let upstream = bce_logit_grad(&p, &y)?;
        let (_, grads) = self.discriminator.backward(&tape, &upstream, OutputGrad::PreActivation)?;
        self.d_adam.step(&mut self.discriminator, &grads)?;
        Ok(loss)
    }

    /// One generator update through the frozen discriminator, pushing
    /// `D(G(z|c)|c)` towards 1. The discriminator is not modified.
    pub fn generator_step(&mut self, cond: &Tensor, z: &Tensor) -> Result<f64, ModelError> {
        let (loss, grads) = generator_loss_grads(&mut self.generator, &self.discriminator, cond, z, true)?;
        self.g_adam.step(&mut self.generator, &grads)?;
        Ok(loss)
    }

    fn checkpoint(&self, config: &CganConfig, train: &Dataset, fingerprint: &str) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            model: Model::Cgan {
                generator: self.generator.clone(),
                discriminator: self.discriminator.clone(),
                g_adam: self.g_adam.clone(),
                d_adam: self.d_adam.clone(),
            },
            config: ModelConfig::Cgan(config.clone()),
            dataset_fingerprint: fingerprint.to_string(),
            data_meta: train.meta.clone(),
        }
    }
}

/// Non-saturating generator loss `−mean ln D(G(z|c)|c)` and its gradient
/// with respect to the generator parameters. With `update_stats` the
/// generator's batch-norm running statistics advance as in training.
fn generator_loss_grads(
    generator: &mut Network,
    discriminator: &Network,
    cond: &Tensor,
    z: &Tensor,
    update_stats: bool,
) -> Result<(f64, Gradients), ModelError> {
    let input = z.hcat(cond)?;
    let (fake, g_tape) = if update_stats {
        generator.forward_train(&input)?
    } else {
        generator.forward_frozen(&input)?
    };
    let width = fake.cols();
    let (p, d_tape) = discriminator.forward_frozen(&fake.hcat(cond)?)?;
    let ones = labels(p.rows(), 1.0);
    let loss = bce(&p, &ones)?;
    let upstream = bce_logit_grad(&p, &ones)?;
    let (dx, _) = discriminator.backward(&d_tape, &upstream, OutputGrad::PreActivation)?;
    let (_, grads) = generator.backward(&g_tape, &dx.columns(0, width), OutputGrad::Output)?;
    Ok((loss, grads))
}

fn generator_loss(generator: &Network, discriminator: &Network, cond: &Tensor, z: &Tensor) -> Result<f64, NnError> {
    let (fake, _) = generator.forward_frozen(&z.hcat(cond)?)?;
    let (p, _) = discriminator.forward_frozen(&fake.hcat(cond)?)?;
    bce(&p, &labels(p.rows(), 1.0))
}

/// Finite-difference check of the generator gradient taken through the
/// frozen discriminator.
pub fn generator_grad_check(gan: &GanState, cond: &Tensor, z: &Tensor) -> Result<GradCheckReport, ModelError> {
    let mut g = gan.generator.clone();
    let (_, grads) = generator_loss_grads(&mut g, &gan.discriminator, cond, z, false)?;
    let mut probe = gan.generator.clone();
    Ok(check_gradients(&grads.0, &mut probe, |g| {
        generator_loss(g, &gan.discriminator, cond, z)
    })?)
}

/// Consecutive near-zero discriminator losses that trigger a warning.
pub const DIVERGENCE_STEPS: usize = 100;
pub const DIVERGENCE_LOSS: f64 = 1e-4;

/// Adversarial training for `config.epochs` iterations. Each iteration draws
/// a fresh minibatch of genuine rows with replacement, then performs
/// `d_steps` discriminator and `g_steps` generator updates. Losses are
/// averaged over each checkpoint interval.
pub fn train_cgan(
    state: &mut GanState,
    train: &Dataset,
    config: &CganConfig,
    sink: &mut CheckpointSink<'_>,
) -> Result<TrainReport, ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(config_err("empty training set"));
    }
    let conditioner = Conditioner::new(&train.meta, config.encoding)?;
    let data_dim = train.out_dim();
    if state.discriminator.input_dim() != state.generator.output_dim() + conditioner.dim()
        || state.generator.input_dim() != config.latent_dim + conditioner.dim()
    {
        return Err(config_err("cGAN shape does not match the dataset"));
    }
    let width = state.generator.output_dim();
    let fingerprint = train.fingerprint();
    let mut report = TrainReport::new(ModelKind::Cgan, &["d_loss", "g_loss"], state.epoch);
    let (mut d_sum, mut g_sum, mut count) = (0.0, 0.0, 0usize);
    let mut low_streak = 0usize;
    let mut warned = false;
    while state.epoch < config.epochs {
        let it = state.epoch + 1;
        let (a, b) = (it as u32, (it >> 32) as u16);
        let mut pick = derive(config.seed, Domain::Shuffle, a, b);
        let mut noise = derive(config.seed, Domain::Latent, a, b);
        let idx: Vec<usize> = (0..config.batch_size).map(|_| pick.random_range(0..train.len())).collect();
        let cond = train.inputs(&conditioner, &idx)?;
        let mut real = train.targets(&idx);
        if width > data_dim {
            let data = real.data().iter().flat_map(|&v| std::iter::repeat_n(v, width)).collect();
            real = Tensor::from_vec(idx.len(), width, data)?;
        }
        let mut d_loss = 0.0;
        for _ in 0..config.d_steps {
            let z = latent(idx.len(), config.latent_dim, &mut noise);
            d_loss = state.discriminator_step(&real, &cond, &z)?;
        }
        let mut g_loss = 0.0;
        for _ in 0..config.g_steps {
            let z = latent(idx.len(), config.latent_dim, &mut noise);
            g_loss = state.generator_step(&cond, &z)?;
        }
        if !d_loss.is_finite() || !g_loss.is_finite() {
            return Err(ModelError::NonFinite {
                what: "adversarial loss",
                epoch: it,
                batch: 0,
            });
        }
        low_streak = if d_loss < DIVERGENCE_LOSS { low_streak + 1 } else { 0 };
        if low_streak >= DIVERGENCE_STEPS && !warned {
            warned = true;
            report.warnings.push(format!(
                "discriminator loss below {DIVERGENCE_LOSS:e} for {DIVERGENCE_STEPS} consecutive iterations at iteration {it}"
            ));
        }
        d_sum += d_loss;
        g_sum += g_loss;
        count += 1;
        state.epoch = it;
        if it % config.checkpoint_every == 0 {
            report.rows.push((it, vec![d_sum / count as f64, g_sum / count as f64]));
            (d_sum, g_sum, count) = (0.0, 0.0, 0);
            sink(state.checkpoint(config, train, &fingerprint))?;
        }
    }
    if count > 0 {
        report.rows.push((state.epoch, vec![d_sum / count as f64, g_sum / count as f64]));
    }
    report.epoch = state.epoch;
    Ok(report)
}
