//! Run configuration: a named preset, optionally patched by a TOML file,
//! then by `--seed`, `--out` and dotted `--override key=value` pairs.

use std::path::{Path, PathBuf};

use fadenet::channel::{Approach, ChannelParams, NoiseParams};
use fadenet::datagen::{paper_distances, CategoryTable, DatasetMeta, MRule, ScalingMode, SplitInfo, SplitPart};
use fadenet::models::{CganConfig, EvalPlan, FnnConfig, ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Samples per category before the train/validation split.
    pub n_per_category: usize,
    pub train_ratio: f64,
    /// Samples per category in the held-out test set.
    pub test_per_category: usize,
    /// Distance categories (power datasets).
    pub distances: Vec<f64>,
    pub m_rule: MRule,
    /// Per-axis QAM levels (amplitude datasets).
    pub levels: Vec<f64>,
    /// Link distance (amplitude datasets).
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub approach: Approach,
    pub model: ModelKind,
    /// Seeds data generation, the split and model training.
    pub seed: u64,
    pub out: PathBuf,
    pub channel: ChannelParams,
    pub noise: NoiseParams,
    pub data: DataConfig,
    pub fnn: FnnConfig,
    pub cgan: CganConfig,
    pub eval: EvalPlan,
}

pub const PRESETS: &[&str] = &[
    "desk-approach2",
    "desk-approach2-cgan",
    "desk-approach2-50k",
    "desk-approach2-50k-cgan",
    "desk-approach1",
    "smoke-fnn",
    "smoke-cgan",
    "paper-approach1",
    "paper-approach1-cgan",
    "paper-approach2-nonoise-0.54M",
    "paper-approach2-nonoise-1.08M",
    "paper-approach2-nonoise-2.16M",
    "paper-approach2-noise-1e-15",
    "paper-approach2-noise-1e-16",
];

pub const DEFAULT_PRESET: &str = "desk-approach2";

const TEST_SALT: u64 = 0x7e57_da7a_0000_0001;
const NOISE_MEAN: f64 = 1.256e-15;

fn desk_approach2() -> RunConfig {
    RunConfig {
        approach: Approach::Power,
        model: ModelKind::Fnn,
        seed: 0,
        out: PathBuf::from("runs/desk-approach2"),
        channel: ChannelParams::distance_experiment(),
        noise: NoiseParams::disabled(),
        data: DataConfig {
            n_per_category: 1000,
            train_ratio: 0.8,
            test_per_category: 334,
            distances: paper_distances(),
            m_rule: MRule::paper(),
            levels: vec![-3.0, -1.0, 1.0, 3.0],
            distance: 200.0,
        },
        fnn: FnnConfig {
            num_layer: 4,
            num_unit: 64,
            epochs: 200,
            batch_size: 512,
            checkpoint_every: 1,
            ..FnnConfig::default()
        },
        cgan: CganConfig {
            g_units: 64,
            d_units: 64,
            epochs: 5000,
            checkpoint_every: 100,
            ..CganConfig::default()
        },
        eval: EvalPlan::default(),
    }
}

/// Paper-scale budgets: 500 FNN epochs saved every epoch, 50 000 cGAN
/// iterations saved every 100, 0.3 million evaluation values.
fn paper_scale(mut c: RunConfig, n_per_category: usize, test_per_category: usize, eval_per_category: usize) -> RunConfig {
    c.data.n_per_category = n_per_category;
    c.data.test_per_category = test_per_category;
    c.fnn = FnnConfig::default();
    c.cgan = CganConfig::default();
    c.eval.per_category = eval_per_category;
    c
}

fn with_model(mut c: RunConfig, model: ModelKind) -> RunConfig {
    c.model = model;
    c
}

fn approach1(mut c: RunConfig) -> RunConfig {
    c.approach = Approach::Amplitude;
    c.channel = ChannelParams::qam_experiment();
    c
}

pub fn preset(name: &str) -> Option<RunConfig> {
    let desk = desk_approach2();
    let mut c = match name {
        "desk-approach2" => desk,
        "desk-approach2-cgan" => with_model(desk, ModelKind::Cgan),
        "desk-approach2-50k" | "desk-approach2-50k-cgan" => {
            let mut c = desk;
            // 2084 × 30 × 0.8 = 50 010 training samples.
            c.data.n_per_category = 2084;
            if name.ends_with("cgan") {
                c.model = ModelKind::Cgan;
            }
            c
        }
        "desk-approach1" => {
            let mut c = approach1(desk);
            c.data.n_per_category = 2000;
            c.data.test_per_category = 200;
            c
        }
        "smoke-fnn" | "smoke-cgan" => {
            let mut c = desk;
            c.data.n_per_category = 34;
            c.data.test_per_category = 10;
            c.fnn = FnnConfig {
                num_layer: 2,
                num_unit: 16,
                epochs: 5,
                batch_size: 64,
                ..FnnConfig::default()
            };
            c.cgan = CganConfig {
                latent_dim: 4,
                g_layers: 2,
                g_units: 16,
                d_layers: 2,
                d_units: 16,
                epochs: 50,
                checkpoint_every: 10,
                batch_size: 64,
                ..CganConfig::default()
            };
            c.eval.per_category = 100;
            if name == "smoke-cgan" {
                c.model = ModelKind::Cgan;
            }
            c
        }
        // 16 points × 2 axes × 33 750 = 1.08 M values; 0.1 M test values.
        "paper-approach1" => paper_scale(approach1(desk), 33_750, 3_125, 18_750),
        "paper-approach1-cgan" => with_model(paper_scale(approach1(desk), 33_750, 3_125, 18_750), ModelKind::Cgan),
        "paper-approach2-nonoise-0.54M" => paper_scale(desk, 18_000, 3_334, 10_000),
        "paper-approach2-nonoise-1.08M" => paper_scale(desk, 36_000, 3_334, 10_000),
        "paper-approach2-nonoise-2.16M" => paper_scale(desk, 72_000, 3_334, 10_000),
        "paper-approach2-noise-1e-15" | "paper-approach2-noise-1e-16" => {
            let var = if name.ends_with("15") { 1e-15 } else { 1e-16 };
            let mut c = paper_scale(desk, 36_000, 3_334, 10_000);
            c.noise = NoiseParams::gaussian(NOISE_MEAN, var);
            c
        }
        _ => return None,
    };
    c.out = PathBuf::from("runs").join(name);
    Some(c)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.channel.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let d = &self.data;
        if d.n_per_category < 2 {
            return bad("data.n_per_category must be at least 2".into());
        }
        if !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            return bad(format!("data.train_ratio must be in (0, 1), got {}", d.train_ratio));
        }
        if d.test_per_category == 0 {
            return bad("data.test_per_category must be positive".into());
        }
        match self.approach {
            Approach::Power if d.distances.is_empty() => return bad("data.distances is empty".into()),
            Approach::Amplitude if d.levels.is_empty() => return bad("data.levels is empty".into()),
            _ => {}
        }
        let targets = match self.approach {
            Approach::Amplitude => 2,
            Approach::Power => 1,
        };
        let head = match self.model {
            ModelKind::Fnn => self.fnn.out_dim,
            ModelKind::Cgan => self.cgan.out_dim,
        };
        if head.is_some_and(|w| w < targets) {
            return bad(format!("{targets} targets need an output head at least that wide"));
        }
        match self.model_config() {
            ModelConfig::Fnn(c) => c.validate(),
            ModelConfig::Cgan(c) => c.validate(),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        if self.eval.per_category < 2 {
            return bad("eval.per_category must be at least 2".into());
        }
        self.eval.kde.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// The selected model's configuration, seeded from the run seed.
    pub fn model_config(&self) -> ModelConfig {
        match self.model {
            ModelKind::Fnn => ModelConfig::Fnn(FnnConfig {
                seed: self.seed,
                ..self.fnn.clone()
            }),
            ModelKind::Cgan => ModelConfig::Cgan(CganConfig {
                seed: self.seed,
                ..self.cgan.clone()
            }),
        }
    }

    fn meta(&self, n_per_category: usize, seed: u64, split: Option<SplitInfo>) -> DatasetMeta {
        let d = &self.data;
        let (scaling, table) = match self.approach {
            Approach::Amplitude => (
                ScalingMode::identity(),
                CategoryTable::Constellation {
                    levels: d.levels.clone(),
                    distance: d.distance,
                },
            ),
            Approach::Power => (
                ScalingMode::for_noise(&self.noise),
                CategoryTable::Distances {
                    distances: d.distances.clone(),
                    m: d.distances.iter().map(|&x| d.m_rule.m(x)).collect(),
                },
            ),
        };
        DatasetMeta {
            approach: self.approach,
            params: self.channel,
            noise: self.noise,
            scaling,
            table,
            n_per_category,
            seed,
            split,
        }
    }

    /// Metadata of the unsplit pool the train and validation sets come from.
    pub fn pool_meta(&self) -> DatasetMeta {
        self.meta(self.data.n_per_category, self.seed, None)
    }

    pub fn split_meta(&self, part: SplitPart) -> DatasetMeta {
        let info = SplitInfo {
            part,
            ratio: self.data.train_ratio,
            seed: self.seed,
        };
        self.meta(self.data.n_per_category, self.seed, Some(info))
    }

    /// Held-out test set, drawn from a stream disjoint from the pool's.
    pub fn test_meta(&self) -> DatasetMeta {
        self.meta(self.data.test_per_category, self.seed ^ TEST_SALT, None)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }
}

/// Sources of a resolved configuration, applied in this order.
#[derive(Debug, Default)]
pub struct ConfigSources<'a> {
    pub preset: Option<&'a str>,
    pub file: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub overrides: &'a [String],
}

pub fn resolve(src: &ConfigSources) -> Result<RunConfig, CliError> {
    let file: Option<Value> = match src.file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let v: Value = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(v)
        }
        None => None,
    };
    let file_preset = file
        .as_ref()
        .and_then(|v| v.get("preset"))
        .map(|p| {
            p.as_str()
                .map(str::to_owned)
                .ok_or_else(|| CliError::Config("`preset` must be a string".into()))
        })
        .transpose()?;
    let name = src.preset.or(file_preset.as_deref()).unwrap_or(DEFAULT_PRESET);
    let base = preset(name).ok_or_else(|| {
        CliError::Config(format!("unknown preset `{name}`; available: {}", PRESETS.join(", ")))
    })?;
    let mut value = serde_json::to_value(&base).expect("config serializes");
    if let Some(mut f) = file {
        if let Some(obj) = f.as_object_mut() {
            obj.remove("preset");
        }
        merge(&mut value, f);
    }
    if let Some(seed) = src.seed {
        value["seed"] = seed.into();
    }
    if let Some(out) = src.out {
        value["out"] = Value::String(out.to_string_lossy().into_owned());
    }
    for o in src.overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| Value::String(raw.to_string()))
}

pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for part in &path[..path.len() - 1] {
        node = node
            .get_mut(*part)
            .filter(|n| n.is_object())
            .ok_or_else(|| CliError::Config(format!("override `{key}`: no section `{part}`")))?;
    }
    let leaf = path[path.len() - 1];
    node.as_object_mut()
        .expect("checked above")
        .insert(leaf.to_string(), parse_value(raw.trim()));
    Ok(())
}
