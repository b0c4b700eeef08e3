//! Conditioned training data drawn from the channel.
//!
//! A [`Dataset`] stores, per sample, its category, the quantile(s) `r` that
//! drove the draw, the raw received value(s) and the scaled training
//! target(s). Condition vectors are not stored; a [`Conditioner`] builds them
//! on demand so the same data can feed one-hot and embedding models.
//!
//! Generation is split into blocks of [`BLOCK`] replicates per category, each
//! with its own random stream, so the output is identical whether blocks run
//! in parallel or not.

mod io;

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Approach, ChannelError, ChannelParams, NoiseParams};
use crate::nn::Tensor;
use crate::par;
use crate::rng::{derive, Domain};

pub use io::{load_dataset, save_dataset, save_dataset_binary, save_dataset_text, FORMAT_VERSION};

/// Replicates per random stream.
pub const BLOCK: usize = 4096;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset request: {0}")]
    Invalid(String),
    #[error("value {value} cannot be log-scaled")]
    Unscalable { value: f64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset file is truncated: expected {expected}, found {found}")]
    Truncated { expected: String, found: String },
    #[error("dataset checksum mismatch")]
    Checksum,
    #[error("dataset format version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("malformed dataset file: {0}")]
    Format(String),
}

fn invalid(msg: impl Into<String>) -> DataError {
    DataError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QamConstellation {
    levels: Vec<f64>,
    points: Vec<(f64, f64)>,
}

/// Cartesian product of `levels` with itself, row-major by level index.
pub fn build_constellation(levels: &[f64]) -> Result<QamConstellation, DataError> {
    if levels.is_empty() {
        return Err(invalid("constellation needs at least one level"));
    }
    for (i, a) in levels.iter().enumerate() {
        if !a.is_finite() {
            return Err(invalid(format!("level {a} is not finite")));
        }
        if levels[..i].contains(a) {
            return Err(invalid(format!("duplicate level {a}")));
        }
    }
    let points = levels
        .iter()
        .flat_map(|&i| levels.iter().map(move |&q| (i, q)))
        .collect();
    Ok(QamConstellation {
        levels: levels.to_vec(),
        points,
    })
}

impl QamConstellation {
    pub fn qam16() -> Self {
        build_constellation(&[-3.0, -1.0, 1.0, 3.0]).expect("static levels")
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().fold(0.0, |acc: f64, l| acc.max(l.abs()))
    }
}

/// Shape parameter as a function of distance: `near` up to and including
/// `threshold`, `far` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MRule {
    pub threshold: f64,
    pub near: f64,
    pub far: f64,
}

impl MRule {
    pub fn paper() -> Self {
        Self {
            threshold: 140.0,
            near: 2.0,
            far: 1.0,
        }
    }

    pub fn constant(m: f64) -> Self {
        Self {
            threshold: f64::INFINITY,
            near: m,
            far: m,
        }
    }

    pub fn m(&self, d: f64) -> f64 {
        if d <= self.threshold {
            self.near
        } else {
            self.far
        }
    }
}

/// Distances 10, 20, …, 300.
pub fn paper_distances() -> Vec<f64> {
    (1..=30).map(|i| 10.0 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingVariant {
    /// `log10(x·u)`
    WithNoise,
    /// `log10(x·u + 2)`
    WithoutNoise,
    /// `x·u`, for signed amplitude targets where a log is undefined.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMode {
    pub variant: ScalingVariant,
    pub unit_scale: f64,
}

impl ScalingMode {
    pub fn new(variant: ScalingVariant, unit_scale: f64) -> Result<Self, DataError> {
        if !(unit_scale.is_finite() && unit_scale > 0.0) {
            return Err(invalid(format!("unit_scale must be positive, got {unit_scale}")));
        }
        Ok(Self { variant, unit_scale })
    }

    /// Log scaling matched to the noise setting.
    pub fn for_noise(noise: &NoiseParams) -> Self {
        Self {
            variant: if noise.enabled {
                ScalingVariant::WithNoise
            } else {
                ScalingVariant::WithoutNoise
            },
            unit_scale: noise.unit_scale,
        }
    }

    pub fn identity() -> Self {
        Self {
            variant: ScalingVariant::Identity,
            unit_scale: 1.0,
        }
    }

    pub fn scale(&self, x: f64) -> Result<f64, DataError> {
        let u = x * self.unit_scale;
        let y = match self.variant {
            ScalingVariant::WithNoise if u > 0.0 => u.log10(),
            ScalingVariant::WithoutNoise if u > -2.0 => (u + 2.0).log10(),
            ScalingVariant::Identity => u,
            _ => f64::NAN,
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(DataError::Unscalable { value: x })
        }
    }

    pub fn unscale(&self, y: f64) -> f64 {
        let u = match self.variant {
            ScalingVariant::WithNoise => 10f64.powf(y),
            ScalingVariant::WithoutNoise => 10f64.powf(y) - 2.0,
            ScalingVariant::Identity => y,
        };
        u / self.unit_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CategoryTable {
    /// One category per constellation point, all at one distance.
    Constellation { levels: Vec<f64>, distance: f64 },
    /// One category per distance with its shape parameter.
    Distances { distances: Vec<f64>, m: Vec<f64> },
}

impl CategoryTable {
    pub fn len(&self) -> usize {
        match self {
            Self::Constellation { levels, .. } => levels.len() * levels.len(),
            Self::Distances { distances, .. } => distances.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, category: usize) -> String {
        match self {
            Self::Constellation { levels, .. } => {
                let k = levels.len();
                format!("({},{})", levels[category / k], levels[category % k])
            }
            Self::Distances { distances, .. } => format!("d={}", distances[category]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub part: SplitPart,
    pub ratio: f64,
    pub seed: u64,
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub approach: Approach,
    pub params: ChannelParams,
    pub noise: NoiseParams,
    pub scaling: ScalingMode,
    pub table: CategoryTable,
    pub n_per_category: usize,
    pub seed: u64,
    #[serde(default)]
    pub split: Option<SplitInfo>,
}

impl DatasetMeta {
    pub fn n_categories(&self) -> usize {
        self.table.len()
    }

    /// Quantiles per sample: two for I/Q pairs, one for power.
    pub fn r_dim(&self) -> usize {
        match self.approach {
            Approach::Amplitude => 2,
            Approach::Power => 1,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.r_dim()
    }

    /// Closed-form moments of the raw target per output axis, noise included.
    pub fn ideal_moments(&self, category: usize) -> Result<Vec<Moments>, DataError> {
        let noise_mean = if self.noise.enabled { self.noise.mean } else { 0.0 };
        let noise_var = if self.noise.enabled { self.noise.variance_watts() } else { 0.0 };
        let shift = |mean: f64, var: f64| Moments {
            mean: mean + noise_mean,
            var: var + noise_var,
        };
        match &self.table {
            CategoryTable::Constellation { levels, distance } => {
                let k = levels.len();
                [levels[category / k], levels[category % k]]
                    .iter()
                    .map(|&a| {
                        let p = axis_params(&self.params, a)?;
                        let mean = p.ideal_mean(Approach::Amplitude, *distance)?;
                        let var = p.ideal_var(Approach::Amplitude, *distance)?;
                        Ok(shift(a.signum() * mean, var))
                    })
                    .collect()
            }
            CategoryTable::Distances { distances, m } => {
                let p = self.params.with_m(m[category]);
                let d = distances[category];
                Ok(vec![shift(p.ideal_mean(self.approach, d)?, p.ideal_var(self.approach, d)?)])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

fn axis_params(params: &ChannelParams, amplitude: f64) -> Result<ChannelParams, DataError> {
    if amplitude == 0.0 {
        return Err(invalid("constellation levels must be nonzero"));
    }
    Ok(params.with_pt(amplitude * amplitude))
}

/// One record. Only the first `r_dim`/`out_dim` slots are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub category: u32,
    pub r: [f64; 2],
    pub raw: [f64; 2],
    pub target: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
    /// Draws rejected by the log scaling, per category.
    pub dropped: Vec<usize>,
}

/// Approach-1 generation: per-axis amplitude fading of a QAM constellation at
/// distance `d`. The sign of each axis amplitude is reapplied to the faded
/// magnitude.
pub fn generate_approach1(
    n_per_point: usize,
    constellation: &QamConstellation,
    params: &ChannelParams,
    distance: f64,
    noise: &NoiseParams,
    seed: u64,
) -> Result<Dataset, DataError> {
    let meta = DatasetMeta {
        approach: Approach::Amplitude,
        params: *params,
        noise: *noise,
        scaling: ScalingMode::identity(),
        table: CategoryTable::Constellation {
            levels: constellation.levels().to_vec(),
            distance,
        },
        n_per_category: n_per_point,
        seed,
        split: None,
    };
    generate(&meta)
}

/// Approach-2 generation: received power per distance category, with `m`
/// chosen by `m_rule`.
pub fn generate_approach2(
    n_per_distance: usize,
    params: &ChannelParams,
    noise: &NoiseParams,
    distances: &[f64],
    m_rule: MRule,
    seed: u64,
) -> Result<Dataset, DataError> {
    let meta = DatasetMeta {
        approach: Approach::Power,
        params: *params,
        noise: *noise,
        scaling: ScalingMode::for_noise(noise),
        table: CategoryTable::Distances {
            distances: distances.to_vec(),
            m: distances.iter().map(|&d| m_rule.m(d)).collect(),
        },
        n_per_category: n_per_distance,
        seed,
        split: None,
    };
    generate(&meta)
}

/// Rebuilds a dataset from its metadata, including any split.
pub fn regenerate(meta: &DatasetMeta) -> Result<Dataset, DataError> {
    let full = generate(&DatasetMeta {
        split: None,
        ..meta.clone()
    })?;
    match meta.split {
        None => Ok(full),
        Some(info) => {
            let (train, val) = split(&full, info.ratio, info.seed)?;
            Ok(match info.part {
                SplitPart::Train => train,
                SplitPart::Validation => val,
            })
        }
    }
}

struct Job {
    category: usize,
    block: u16,
    count: usize,
}

fn generate(meta: &DatasetMeta) -> Result<Dataset, DataError> {
    validate_meta(meta)?;
    let n = meta.n_per_category;
    let blocks = n.div_ceil(BLOCK);
    if blocks > u16::MAX as usize + 1 {
        return Err(invalid(format!("{n} samples per category exceeds the stream layout")));
    }
    let jobs: Vec<Job> = (0..meta.n_categories())
        .flat_map(|category| {
            (0..blocks).map(move |b| Job {
                category,
                block: b as u16,
                count: BLOCK.min(n - b * BLOCK),
            })
        })
        .collect();
    let results = par::map(&jobs, |job| generate_block(meta, job));
    let mut samples = Vec::with_capacity(n * meta.n_categories());
    let mut dropped = vec![0; meta.n_categories()];
    for (job, result) in jobs.iter().zip(results) {
        let (block, lost) = result?;
        samples.extend(block);
        dropped[job.category] += lost;
    }
    Ok(Dataset {
        meta: meta.clone(),
        samples,
        dropped,
    })
}

fn validate_meta(meta: &DatasetMeta) -> Result<(), DataError> {
    meta.params.validate()?;
    meta.noise.validate()?;
    ScalingMode::new(meta.scaling.variant, meta.scaling.unit_scale)?;
    if meta.n_per_category == 0 {
        return Err(invalid("need at least one sample per category"));
    }
    match &meta.table {
        CategoryTable::Constellation { levels, distance } => {
            if meta.approach != Approach::Amplitude {
                return Err(invalid("constellation tables belong to the amplitude approach"));
            }
            build_constellation(levels)?;
            for &a in levels {
                axis_params(&meta.params, a)?.validate()?;
            }
            meta.params.path_loss(*distance)?;
        }
        CategoryTable::Distances { distances, m } => {
            if meta.approach != Approach::Power {
                return Err(invalid("distance tables belong to the power approach"));
            }
            if distances.is_empty() || distances.len() != m.len() {
                return Err(invalid("distance table must be non-empty with one m per distance"));
            }
            for (&d, &mi) in distances.iter().zip(m) {
                meta.params.with_m(mi).fading(d)?;
            }
        }
    }
    if meta.n_categories() > u32::MAX as usize {
        return Err(invalid("too many categories"));
    }
    Ok(())
}

fn generate_block(meta: &DatasetMeta, job: &Job) -> Result<(Vec<Sample>, usize), DataError> {
    let cat = job.category as u32;
    let mut rng = derive(meta.seed, Domain::Samples, cat, job.block);
    let mut noise_rng = derive(meta.seed, Domain::Noise, cat, job.block);
    let mut out = Vec::with_capacity(job.count);
    let mut dropped = 0;
    let mut noisy = |x: f64| -> Result<f64, DataError> {
        Ok(if meta.noise.enabled {
            x + meta.noise.sample(&mut noise_rng)?
        } else {
            x
        })
    };
    match &meta.table {
        CategoryTable::Constellation { levels, distance } => {
            let k = levels.len();
            let axes = [levels[job.category / k], levels[job.category % k]];
            let fading = [
                axis_params(&meta.params, axes[0])?.fading(*distance)?,
                axis_params(&meta.params, axes[1])?.fading(*distance)?,
            ];
            for _ in 0..job.count {
                let r: [f64; 2] = [rng.random(), rng.random()];
                let mut raw = [0.0; 2];
                let mut target = [0.0; 2];
                let mut keep = true;
                for a in 0..2 {
                    let v = axes[a].signum() * fading[a].quantile(Approach::Amplitude, r[a])?;
                    raw[a] = noisy(v)?;
                    match meta.scaling.scale(raw[a]) {
                        Ok(t) => target[a] = t,
                        Err(DataError::Unscalable { .. }) => keep = false,
                        Err(e) => return Err(e),
                    }
                }
                if keep {
                    out.push(Sample {
                        category: cat,
                        r,
                        raw,
                        target,
                    });
                } else {
                    dropped += 1;
                }
            }
        }
        CategoryTable::Distances { distances, m } => {
            let fading = meta.params.with_m(m[job.category]).fading(distances[job.category])?;
            for _ in 0..job.count {
                let r: f64 = rng.random();
                let raw = noisy(fading.quantile(meta.approach, r)?)?;
                match meta.scaling.scale(raw) {
                    Ok(t) => out.push(Sample {
                        category: cat,
                        r: [r, 0.0],
                        raw: [raw, 0.0],
                        target: [t, 0.0],
                    }),
                    Err(DataError::Unscalable { .. }) => dropped += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok((out, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionEncoding {
    /// Normalized constellation point (Approach 1) or one-hot distance
    /// indicator (Approach 2), followed by the quantile(s).
    OneHot,
    /// Raw category index followed by the quantile(s); the network's first
    /// layer is expected to be an embedding.
    Embedding,
}

/// `(I/max, Q/max, r_real, r_imag)`.
pub fn encode_condition_approach1(point: (f64, f64), max_level: f64, r: [f64; 2]) -> [f64; 4] {
    [point.0 / max_level, point.1 / max_level, r[0], r[1]]
}

pub fn encode_condition_approach2(
    index: usize,
    n_categories: usize,
    r: f64,
    encoding: ConditionEncoding,
) -> Result<Vec<f64>, DataError> {
    if index >= n_categories {
        return Err(invalid(format!("category {index} out of range 0..{n_categories}")));
    }
    Ok(match encoding {
        ConditionEncoding::OneHot => {
            let mut v = vec![0.0; n_categories + 1];
            v[index] = 1.0;
            v[n_categories] = r;
            v
        }
        ConditionEncoding::Embedding => vec![index as f64, r],
    })
}

/// Builds network input rows from `(category, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioner {
    pub approach: Approach,
    pub encoding: ConditionEncoding,
    pub n_categories: usize,
    /// Normalized constellation points, empty for distance tables.
    points: Vec<(f64, f64)>,
}

impl Conditioner {
    pub fn new(meta: &DatasetMeta, encoding: ConditionEncoding) -> Result<Self, DataError> {
        let points = match &meta.table {
            CategoryTable::Constellation { levels, .. } => {
                let c = build_constellation(levels)?;
                let max = c.max_level();
                c.points().iter().map(|&(i, q)| (i / max, q / max)).collect()
            }
            CategoryTable::Distances { .. } => Vec::new(),
        };
        Ok(Self {
            approach: meta.approach,
            encoding,
            n_categories: meta.n_categories(),
            points,
        })
    }

    pub fn r_dim(&self) -> usize {
        match self.approach {
            Approach::Amplitude => 2,
            Approach::Power => 1,
        }
    }

    pub fn dim(&self) -> usize {
        let front = match (self.encoding, self.approach) {
            (ConditionEncoding::Embedding, _) => 1,
            (ConditionEncoding::OneHot, Approach::Amplitude) => 2,
            (ConditionEncoding::OneHot, Approach::Power) => self.n_categories,
        };
        front + self.r_dim()
    }

    pub fn encode_into(&self, category: usize, r: &[f64], out: &mut Vec<f64>) -> Result<(), DataError> {
        if category >= self.n_categories {
            return Err(invalid(format!("category {category} out of range 0..{}", self.n_categories)));
        }
        if r.len() < self.r_dim() {
            return Err(invalid("too few quantiles for the condition"));
        }
        match (self.encoding, self.approach) {
            (ConditionEncoding::Embedding, _) => out.push(category as f64),
            (ConditionEncoding::OneHot, Approach::Amplitude) => {
                let (i, q) = self.points[category];
                out.extend([i, q]);
            }
            (ConditionEncoding::OneHot, Approach::Power) => {
                let start = out.len();
                out.resize(start + self.n_categories, 0.0);
                out[start + category] = 1.0;
            }
        }
        out.extend_from_slice(&r[..self.r_dim()]);
        Ok(())
    }

    pub fn encode(&self, category: usize, r: &[f64]) -> Result<Vec<f64>, DataError> {
        let mut v = Vec::with_capacity(self.dim());
        self.encode_into(category, r, &mut v)?;
        Ok(v)
    }

    /// One row per `(category, r)` pair.
    pub fn batch<'a>(&self, rows: impl IntoIterator<Item = (usize, &'a [f64])>) -> Result<Tensor, DataError> {
        let mut data = Vec::new();
        let mut n = 0;
        for (c, r) in rows {
            self.encode_into(c, r, &mut data)?;
            n += 1;
        }
        Tensor::from_vec(n, self.dim(), data).map_err(|e| invalid(e.to_string()))
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn approach(&self) -> Approach {
        self.meta.approach
    }

    pub fn n_categories(&self) -> usize {
        self.meta.n_categories()
    }

    pub fn out_dim(&self) -> usize {
        self.meta.out_dim()
    }

    /// Sample indices grouped by category, in stored order.
    pub fn by_category(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_categories()];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.category as usize].push(i);
        }
        groups
    }

    pub fn inputs(&self, conditioner: &Conditioner, idx: &[usize]) -> Result<Tensor, DataError> {
        conditioner.batch(idx.iter().map(|&i| {
            let s = &self.samples[i];
            (s.category as usize, &s.r[..])
        }))
    }

    pub fn targets(&self, idx: &[usize]) -> Tensor {
        let k = self.out_dim();
        let mut data = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            data.extend_from_slice(&self.samples[i].target[..k]);
        }
        Tensor::from_vec(idx.len(), k, data).expect("consistent target width")
    }

    /// SHA-256 over the canonical binary encoding, as hex.
    pub fn fingerprint(&self) -> String {
        io::fingerprint(self)
    }

    /// Per-category counts and moments of the raw targets next to their
    /// closed-form values.
    pub fn stats(&self) -> Result<GenerationStats, DataError> {
        let groups = self.by_category();
        let mut rows = Vec::new();
        for (c, idx) in groups.iter().enumerate() {
            let ideal = self.meta.ideal_moments(c)?;
            for (axis, ideal) in ideal.into_iter().enumerate() {
                let values: Vec<f64> = idx.iter().map(|&i| self.samples[i].raw[axis]).collect();
                let (mean, var) = mean_var(&values);
                rows.push(CategoryGenStats {
                    category: c,
                    label: self.meta.table.label(c),
                    axis,
                    n: values.len(),
                    dropped: self.dropped.get(c).copied().unwrap_or(0),
                    mean,
                    var,
                    ideal,
                });
            }
        }
        Ok(GenerationStats { rows })
    }
}

/// Mean and unbiased variance; NaN variance below two values.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryGenStats {
    pub category: usize,
    pub label: String,
    pub axis: usize,
    pub n: usize,
    pub dropped: usize,
    pub mean: f64,
    pub var: f64,
    pub ideal: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub rows: Vec<CategoryGenStats>,
}

impl GenerationStats {
    pub fn total(&self) -> usize {
        self.rows.iter().filter(|r| r.axis == 0).map(|r| r.n).sum()
    }

    pub fn dropped(&self) -> usize {
        self.rows.iter().filter(|r| r.axis == 0).map(|r| r.dropped).sum()
    }

    /// Tab-separated table with a header line.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("category\tlabel\taxis\tn\tdropped\tmean\tvar\tideal_mean\tideal_var\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:e}\t{:e}\t{:e}\t{:e}",
                r.category, r.label, r.axis, r.n, r.dropped, r.mean, r.var, r.ideal.mean, r.ideal.var
            );
        }
        s
    }
}

/// Stratified split: each category is shuffled with its own stream and the
/// first `round(ratio·n)` samples go to the training part. Both parts keep
/// the original sample order.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if dataset.meta.split.is_some() {
        return Err(invalid("dataset is already a split part"));
    }
    let mut in_train = vec![false; dataset.len()];
    for (c, mut idx) in dataset.by_category().into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(invalid(format!(
                "category {} has {} samples, need at least 2 to split",
                dataset.meta.table.label(c),
                idx.len()
            )));
        }
        let mut rng = derive(seed, Domain::Split, c as u32, 0);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let n_train = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let part = |want: bool, which: SplitPart| Dataset {
        meta: DatasetMeta {
            split: Some(SplitInfo {
                part: which,
                ratio,
                seed,
            }),
            ..dataset.meta.clone()
        },
        samples: dataset
            .samples
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(s, _)| *s)
            .collect(),
        dropped: dataset.dropped.clone(),
    };
    Ok((part(true, SplitPart::Train), part(false, SplitPart::Validation)))
}
