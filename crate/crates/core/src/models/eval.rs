use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate, Checkpoint, ModelError};
use crate::datagen::{regenerate, Dataset, DatasetMeta};
use crate::metrics::{category_stats, metric_table, oa_report, scaled_pe, select_best, KdeConfig, MetricError, OaReport, PeWeights, ScaledPeReport, Selection};
use crate::rng::{derive, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPlan {
    /// Generated values per category.
    pub per_category: usize,
    pub seed: u64,
    pub weights: PeWeights,
    pub kde: KdeConfig,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            per_category: 1000,
            seed: 0x5eed,
            weights: PeWeights::default(),
            kde: KdeConfig::default(),
        }
    }
}

const GENUINE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// `n` quantile tuples, Latin-hypercube style: along each axis every
/// stratum `[i/n, (i+1)/n)` holds exactly one uniformly placed value, and
/// the axes are paired by independent random permutations.
fn stratified(n: usize, r_dim: usize, seed: u64, category: u32) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; n];
    for axis in 0..r_dim {
        let mut rng = derive(seed, Domain::Evaluation, category, axis as u16);
        let order = super::permutation(n, &mut rng);
        for (slot, &stratum) in out.iter_mut().zip(&order) {
            let u: f64 = rng.random();
            slot[axis] = ((stratum as f64 + u) / n as f64).min(1.0 - f64::EPSILON / 2.0);
        }
    }
    out
}

/// Fixed evaluation inputs: fresh quantiles per category for the model and
/// an independent genuine sample from the channel for the overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub meta: DatasetMeta,
    /// `r[c]` holds `per_category` quantile tuples for category `c`.
    pub r: Vec<Vec<[f64; 2]>>,
    pub genuine: Dataset,
}

impl EvalSet {
    pub fn new(meta: &DatasetMeta, plan: &EvalPlan) -> Result<Self, ModelError> {
        if plan.per_category < 2 {
            return Err(super::config_err("evaluation needs at least two values per category"));
        }
        let base = Self::base_meta(meta, plan);
        let genuine = regenerate(&base)?;
        let r_dim = meta.r_dim();
        let r = (0..meta.n_categories())
            .map(|c| stratified(plan.per_category, r_dim, plan.seed, c as u32))
            .collect();
        Ok(Self { meta: base, r, genuine })
    }

    /// Metadata of the genuine reference sample for training data `meta`.
    pub fn base_meta(meta: &DatasetMeta, plan: &EvalPlan) -> DatasetMeta {
        DatasetMeta {
            n_per_category: plan.per_category,
            seed: plan.seed ^ GENUINE_SALT,
            split: None,
            ..meta.clone()
        }
    }

    /// Genuine scaled targets per category for one output axis.
    pub fn genuine_targets(&self, axis: usize) -> Vec<Vec<f64>> {
        self.genuine
            .by_category()
            .iter()
            .map(|idx| idx.iter().map(|&i| self.genuine.samples[i].target[axis]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub epoch: u64,
    pub labels: Vec<String>,
    /// One report per output axis.
    pub pe: Vec<ScaledPeReport>,
    pub oa: Option<Vec<OaReport>>,
    /// Mean ScaledPE over axes.
    pub scaled_pe: f64,
    pub oa_average: Option<f64>,
}

impl Evaluation {
    pub fn to_delimited(&self) -> Option<String> {
        self.oa.as_ref().map(|oa| metric_table(&self.labels, &self.pe, oa))
    }
}

/// Scores scaled generated values (`generated[axis][category]`) against the
/// closed-form moments (ScaledPE, on unscaled values) and, optionally, the
/// genuine sample (OA, on scaled values).
pub fn evaluate_values(
    set: &EvalSet,
    generated: &[Vec<Vec<f64>>],
    plan: &EvalPlan,
    with_oa: bool,
) -> Result<Evaluation, ModelError> {
    let meta = &set.meta;
    let ideal: Vec<_> = (0..meta.n_categories())
        .map(|c| meta.ideal_moments(c))
        .collect::<Result<_, _>>()?;
    let mut pe = Vec::new();
    let mut oa = Vec::new();
    for (axis, scaled) in generated.iter().enumerate() {
        let raw: Vec<Vec<f64>> = scaled
            .iter()
            .map(|v| v.iter().map(|&y| meta.scaling.unscale(y)).collect())
            .collect();
        let axis_ideal: Vec<_> = ideal.iter().map(|m| m[axis]).collect();
        pe.push(scaled_pe(&category_stats(&raw, &axis_ideal)?, plan.weights)?);
        if with_oa {
            oa.push(oa_report(&set.genuine_targets(axis), scaled, &plan.kde)?);
        }
    }
    if pe.is_empty() {
        return Err(MetricError::Invalid("no output axes".into()).into());
    }
    let scaled_pe = pe.iter().map(|r| r.scaled_pe).sum::<f64>() / pe.len() as f64;
    let (oa, oa_average) = if with_oa {
        let avg = oa.iter().map(|o| o.average).sum::<f64>() / oa.len() as f64;
        (Some(oa), Some(avg))
    } else {
        (None, None)
    };
    Ok(Evaluation {
        epoch: 0,
        labels: (0..meta.n_categories()).map(|c| meta.table.label(c)).collect(),
        pe,
        oa,
        scaled_pe,
        oa_average,
    })
}

/// Generates from `ckpt` on the set's quantiles and scores the result.
pub fn evaluate(ckpt: &Checkpoint, set: &EvalSet, plan: &EvalPlan, with_oa: bool) -> Result<Evaluation, ModelError> {
    let meta = &set.meta;
    if ckpt.data_meta.table != meta.table || ckpt.data_meta.approach != meta.approach || ckpt.data_meta.scaling != meta.scaling {
        return Err(super::config_err("evaluation set does not match the checkpoint's data"));
    }
    let conditioner = ckpt.conditioner()?;
    let rows: Vec<(usize, &[f64])> = set
        .r
        .iter()
        .enumerate()
        .flat_map(|(c, rs)| rs.iter().map(move |r| (c, &r[..])))
        .collect();
    let cond = conditioner.batch(rows.iter().copied())?;
    let out = generate(ckpt, &cond, &mut derive(plan.seed, Domain::Latent, 0, 0))?;
    let mut generated = vec![vec![Vec::new(); meta.n_categories()]; meta.out_dim()];
    for (i, &(c, _)) in rows.iter().enumerate() {
        let row = out.row(i);
        for (axis, g) in generated.iter_mut().enumerate() {
            g[c].push(row[axis]);
        }
    }
    let mut e = evaluate_values(set, &generated, plan, with_oa)?;
    e.epoch = ckpt.epoch;
    Ok(e)
}

/// Lowest-ScaledPE checkpoint on a fixed evaluation set.
pub fn select_checkpoint(ckpts: &[Checkpoint], set: &EvalSet, plan: &EvalPlan) -> Result<Selection, ModelError> {
    Ok(select_best(
        ckpts,
        |c| c.epoch,
        |c| evaluate(c, set, plan, false).map(|e| e.scaled_pe),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelParams, NoiseParams};
    use crate::datagen::{generate_approach2, paper_distances, MRule};
    use crate::models::{train_fnn, FnnConfig, FnnState};

    fn meta() -> DatasetMeta {
        generate_approach2(
            2,
            &ChannelParams::distance_experiment(),
            &NoiseParams::disabled(),
            &paper_distances(),
            MRule::paper(),
            0,
        )
        .unwrap()
        .meta
    }

    /// Scaled channel draws at the set's own quantiles.
    fn exact_channel(set: &EvalSet) -> Vec<Vec<Vec<f64>>> {
        let meta = &set.meta;
        let (d, m) = match &meta.table {
            crate::datagen::CategoryTable::Distances { distances, m } => (distances.clone(), m.clone()),
            _ => unreachable!(),
        };
        vec![set
            .r
            .iter()
            .enumerate()
            .map(|(c, rs)| {
                let f = meta.params.with_m(m[c]).fading(d[c]).unwrap();
                rs.iter()
                    .map(|r| meta.scaling.scale(f.quantile(meta.approach, r[0]).unwrap()).unwrap())
                    .collect()
            })
            .collect()]
    }

    #[test]
    fn quantiles_cover_every_stratum() {
        let r = stratified(200, 2, 3, 0);
        for axis in 0..2 {
            let mut hit = vec![0; 200];
            for q in &r {
                assert!((0.0..1.0).contains(&q[axis]));
                hit[(q[axis] * 200.0) as usize] += 1;
            }
            assert!(hit.iter().all(|&h| h == 1));
        }
        assert_eq!(r, stratified(200, 2, 3, 0));
        assert_ne!(r, stratified(200, 2, 4, 0));
    }

    #[test]
    fn channel_against_itself_scores_well() {
        let plan = EvalPlan::default();
        let set = EvalSet::new(&meta(), &plan).unwrap();
        let e = evaluate_values(&set, &exact_channel(&set), &plan, true).unwrap();
        assert!(e.scaled_pe < 1.0, "{}", e.scaled_pe);
        assert!(e.oa_average.unwrap() > 0.95, "{:?}", e.oa_average);
        assert_eq!(e.to_delimited().unwrap().lines().count(), 30 + 3);
    }

    #[test]
    fn evaluation_is_repeatable_and_selection_works() {
        let m = meta();
        let train = generate_approach2(40, &m.params, &m.noise, &paper_distances(), MRule::paper(), 1).unwrap();
        let cfg = FnnConfig {
            num_layer: 2,
            num_unit: 16,
            epochs: 3,
            batch_size: 64,
            ..FnnConfig::default()
        };
        let mut state = FnnState::new(&cfg, &train).unwrap();
        let mut ckpts = Vec::new();
        train_fnn(&mut state, &train, &train, &cfg, &mut |c| {
            ckpts.push(c);
            Ok(())
        })
        .unwrap();
        let plan = EvalPlan {
            per_category: 50,
            ..EvalPlan::default()
        };
        let set = EvalSet::new(&train.meta, &plan).unwrap();
        let a = evaluate(&ckpts[2], &set, &plan, true).unwrap();
        let b = evaluate(&ckpts[2], &set, &plan, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epoch, 3);
        let sel = select_checkpoint(&ckpts, &set, &plan).unwrap();
        assert_eq!(sel.ranking.len(), 3);
        let best = sel.best.unwrap();
        let scores: Vec<f64> = ckpts.iter().map(|c| evaluate(c, &set, &plan, false).unwrap().scaled_pe).collect();
        assert!(scores.iter().all(|&s| s >= scores[best]));
        let single = select_checkpoint(&ckpts[..1], &set, &plan).unwrap();
        assert_eq!(single.best, Some(0));
    }
}
