//! Accordance metrics between generated and genuine channel samples.
//!
//! ScaledPE compares per-category generated mean and variance with the
//! closed-form values and weights the variance error more heavily. The
//! overlapped area (OA) integrates the pointwise minimum of two Gaussian
//! kernel density estimates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{mean_var, Moments};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("invalid metric input: {0}")]
    Invalid(String),
    #[error("percent error is undefined for an ideal value of zero")]
    UndefinedPe,
}

fn invalid(msg: impl Into<String>) -> MetricError {
    MetricError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: usize,
    pub ideal_mean: f64,
    pub ideal_var: f64,
    pub gen_mean: f64,
    pub gen_var: f64,
    pub n: usize,
}

/// Empirical mean and unbiased variance of each category next to its ideal
/// moments. `generated[c]` holds the raw generated values of category `c`.
pub fn category_stats(generated: &[Vec<f64>], ideal: &[Moments]) -> Result<Vec<CategoryStats>, MetricError> {
    if generated.len() != ideal.len() {
        return Err(invalid(format!(
            "{} generated categories but {} ideal entries",
            generated.len(),
            ideal.len()
        )));
    }
    generated
        .iter()
        .zip(ideal)
        .enumerate()
        .map(|(category, (values, ideal))| {
            if values.len() < 2 {
                return Err(invalid(format!("category {category} has fewer than 2 samples")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("category {category} has non-finite samples")));
            }
            let (gen_mean, gen_var) = mean_var(values);
            Ok(CategoryStats {
                category,
                ideal_mean: ideal.mean,
                ideal_var: ideal.var,
                gen_mean,
                gen_var,
                n: values.len(),
            })
        })
        .collect()
}

/// `|ideal − generated| / |ideal| · 100`.
pub fn percent_error(ideal: f64, generated: f64) -> Result<f64, MetricError> {
    if ideal == 0.0 {
        return Err(MetricError::UndefinedPe);
    }
    Ok(((ideal - generated) / ideal).abs() * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeWeights {
    pub mean: f64,
    pub var: f64,
    pub divisor: f64,
}

impl Default for PeWeights {
    fn default() -> Self {
        Self {
            mean: 0.3,
            var: 0.7,
            divisor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPeReport {
    pub pe_mean: Vec<f64>,
    pub pe_var: Vec<f64>,
    pub pe_mean_avg: f64,
    pub pe_var_avg: f64,
    pub weights: PeWeights,
    pub scaled_pe: f64,
}

pub fn scaled_pe(stats: &[CategoryStats], weights: PeWeights) -> Result<ScaledPeReport, MetricError> {
    if stats.is_empty() {
        return Err(invalid("no categories"));
    }
    let pe_mean = stats
        .iter()
        .map(|s| percent_error(s.ideal_mean, s.gen_mean))
        .collect::<Result<Vec<_>, _>>()?;
    let pe_var = stats
        .iter()
        .map(|s| percent_error(s.ideal_var, s.gen_var))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scaled_pe_from(pe_mean, pe_var, weights))
}

/// Combines per-category percent errors.
pub fn scaled_pe_from(pe_mean: Vec<f64>, pe_var: Vec<f64>, weights: PeWeights) -> ScaledPeReport {
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (pe_mean_avg, pe_var_avg) = (avg(&pe_mean), avg(&pe_var));
    ScaledPeReport {
        scaled_pe: (weights.mean * pe_mean_avg + weights.var * pe_var_avg) / weights.divisor,
        pe_mean,
        pe_var,
        pe_mean_avg,
        pe_var_avg,
        weights,
    }
}

/// How the integration interval is chosen from the two sample sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPolicy {
    /// Min and max over the union of both sets.
    Union,
    /// Union extended by this many bandwidths on each side, so the kernel
    /// tails are inside the interval.
    Widened(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeConfig {
    pub bandwidth: f64,
    pub support: SupportPolicy,
    /// Grid size; `None` uses the larger of the two sample counts.
    pub grid: Option<usize>,
    pub min_grid: usize,
    pub max_grid: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.3,
            support: SupportPolicy::Widened(5.0),
            grid: None,
            min_grid: 128,
            max_grid: 10_000,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if let SupportPolicy::Widened(w) = self.support {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("support widening must be nonnegative, got {w}")));
            }
        }
        if self.min_grid < 2 || self.max_grid < self.min_grid || self.grid.is_some_and(|k| k < 2) {
            return Err(invalid("grid sizes must be at least 2 with min ≤ max"));
        }
        Ok(())
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian kernel density estimate with bandwidth `sigma` at each point.
pub fn kde(samples: &[f64], sigma: f64, points: &[f64]) -> Result<Vec<f64>, MetricError> {
    if samples.is_empty() {
        return Err(invalid("kernel density estimate of an empty sample"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    let norm = INV_SQRT_2PI / (samples.len() as f64 * sigma);
    let inv = 1.0 / sigma;
    Ok(points
        .iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&xi| {
                    let z = (x - xi) * inv;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OaLocal {
    pub value: f64,
    pub grid: usize,
    /// The grid size hit `max_grid`.
    pub capped: bool,
}

/// Overlapped area of the two samples' density estimates: trapezoid sum of
/// the pointwise minimum over `k` evenly spaced points with step
/// `(s_max − s_min)/k`. Symmetric in its arguments.
pub fn oa_local(genuine: &[f64], generated: &[f64], config: &KdeConfig) -> Result<OaLocal, MetricError> {
    config.validate()?;
    if genuine.is_empty() || generated.is_empty() {
        return Err(invalid("overlapped area needs two non-empty samples"));
    }
    if genuine.iter().chain(generated).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite sample"));
    }
    let (lo, hi) = genuine
        .iter()
        .chain(generated)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let widen = match config.support {
        SupportPolicy::Union => 0.0,
        SupportPolicy::Widened(w) => w * config.bandwidth,
    };
    let (s_min, s_max) = (lo - widen, hi + widen);
    let wanted = config.grid.unwrap_or(genuine.len().max(generated.len()));
    let k = wanted.clamp(config.min_grid, config.max_grid);
    if s_max == s_min {
        let same = genuine.iter().chain(generated).all(|&v| v == lo);
        return if same {
            Ok(OaLocal {
                value: 1.0,
                grid: k,
                capped: false,
            })
        } else {
            Err(invalid("degenerate support"))
        };
    }
    let span = s_max - s_min;
    let points: Vec<f64> = (0..k).map(|i| s_min + span * i as f64 / (k - 1) as f64).collect();
    let fa = kde(genuine, config.bandwidth, &points)?;
    let fb = kde(generated, config.bandwidth, &points)?;
    let lower: Vec<f64> = fa.iter().zip(&fb).map(|(a, b)| a.min(*b)).collect();
    let dx = span / k as f64;
    let value = lower.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
    Ok(OaLocal {
        value,
        grid: k,
        capped: wanted > config.max_grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OaReport {
    pub local: Vec<OaLocal>,
    pub average: f64,
}

pub fn oa_average(local: &[f64]) -> Result<f64, MetricError> {
    if local.is_empty() {
        return Err(invalid("no categories to average"));
    }
    Ok(local.iter().sum::<f64>() / local.len() as f64)
}

/// Per-category OA, computed in parallel, reported in category order.
pub fn oa_report(genuine: &[Vec<f64>], generated: &[Vec<f64>], config: &KdeConfig) -> Result<OaReport, MetricError> {
    if genuine.len() != generated.len() {
        return Err(invalid("genuine and generated category counts differ"));
    }
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = genuine.iter().zip(generated).collect();
    let local = par::map(&pairs, |(a, b)| oa_local(a, b, config)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let average = oa_average(&local.iter().map(|o| o.value).collect::<Vec<_>>())?;
    Ok(OaReport { local, average })
}

/// Outcome of evaluating one candidate during selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub index: usize,
    pub epoch: u64,
    pub scaled_pe: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best: Option<usize>,
    /// Evaluated candidates by ascending ScaledPE (ties by epoch), then the
    /// failed ones in input order.
    pub ranking: Vec<RankEntry>,
}

impl Selection {
    pub fn best_entry(&self) -> Option<&RankEntry> {
        self.ranking.first().filter(|e| e.scaled_pe.is_some())
    }
}

/// Picks the candidate with the lowest ScaledPE, earliest epoch on ties.
/// Candidates whose evaluation fails are recorded and skipped.
pub fn select_best<C, E: std::fmt::Display>(
    candidates: &[C],
    epoch: impl Fn(&C) -> u64,
    mut evaluate: impl FnMut(&C) -> Result<f64, E>,
) -> Result<Selection, MetricError> {
    if candidates.is_empty() {
        return Err(invalid("no checkpoints to select from"));
    }
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (index, c) in candidates.iter().enumerate() {
        let epoch = epoch(c);
        match evaluate(c) {
            Ok(v) if v.is_finite() => ok.push(RankEntry {
                index,
                epoch,
                scaled_pe: Some(v),
                error: None,
            }),
            Ok(v) => failed.push(RankEntry {
                index,
                epoch,
                scaled_pe: None,
                error: Some(format!("ScaledPE evaluated to {v}")),
            }),
            Err(e) => failed.push(RankEntry {
                index,
                epoch,
                scaled_pe: None,
                error: Some(e.to_string()),
            }),
        }
    }
    ok.sort_by(|a, b| {
        a.scaled_pe
            .partial_cmp(&b.scaled_pe)
            .expect("finite")
            .then(a.epoch.cmp(&b.epoch))
            .then(a.index.cmp(&b.index))
    });
    let best = ok.first().map(|e| e.index);
    ok.extend(failed);
    Ok(Selection { best, ranking: ok })
}

/// One row per category and axis, tab-separated, followed by a summary.
pub fn metric_table(labels: &[String], pe: &[ScaledPeReport], oa: &[OaReport]) -> String {
    let mut s = String::from("category\tlabel\taxis\tpe_mean\tpe_var\toa_local\n");
    for (axis, (p, o)) in pe.iter().zip(oa).enumerate() {
        for (c, label) in labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{c}\t{label}\t{axis}\t{:.6}\t{:.6}\t{:.6}",
                p.pe_mean[c], p.pe_var[c], o.local[c].value
            );
        }
    }
    s.push('\n');
    for (axis, (p, o)) in pe.iter().zip(oa).enumerate() {
        let _ = writeln!(
            s,
            "# axis {axis}: pe_mean_avg {:.6} pe_var_avg {:.6} scaled_pe {:.6} oa {:.6}",
            p.pe_mean_avg, p.pe_var_avg, p.scaled_pe, o.average
        );
    }
    s
}
