//! Browser bindings for the demo page in `www/`. Results that carry several
//! series are returned as JSON strings.

use fadenet::channel::{Approach, ChannelParams, NoiseParams};
use fadenet::datagen::{generate_approach2, paper_distances, split, Conditioner, Dataset, MRule};
use fadenet::metrics::{kde, oa_local, KdeConfig};
use fadenet::models::{
    evaluate, train_fnn, Checkpoint, EvalPlan, EvalSet, FnnConfig, FnnState, Model, ModelConfig,
};
use fadenet::rng::{derive, Domain};
use rand_distr::{Distribution, Normal};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut h = vec![0.0; bins];
    for &v in values {
        let b = ((v - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            h[b as usize] += 1.0;
        }
    }
    let norm = values.len() as f64 * width;
    h.iter_mut().for_each(|c| *c /= norm);
    h
}

/// Received power at `distance` metres with shape `m`, in the log domain
/// `log10(P·1e14 + 2)`: analytic density, histogram of `n` quantile-sampled
/// draws, and the closed-form and sample means in watts.
#[wasm_bindgen]
pub fn channel_curves(m: f64, distance: f64, n: usize, seed: u64) -> Result<String, JsError> {
    const U: f64 = 1e14;
    let params = ChannelParams::distance_experiment().with_m(m);
    params.validate().map_err(js_err)?;
    let fading = params.fading(distance).map_err(js_err)?;
    let n = n.clamp(10, 200_000);
    let mut rng = derive(seed, Domain::Samples, 0, 0);
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let r: f64 = rand::Rng::random(&mut rng);
        raw.push(fading.quantile(Approach::Power, r).map_err(js_err)?);
    }
    let scaled: Vec<f64> = raw.iter().map(|x| (x * U + 2.0).log10()).collect();
    let (lo, hi) = (2f64.log10(), scaled.iter().cloned().fold(f64::MIN, f64::max) * 1.05);
    let x = linspace(lo, hi, 200);
    // Change of variables y = log10(P·u + 2): f_Y(y) = f_P(P)·(P·u + 2)·ln10 / u.
    let pdf = x
        .iter()
        .map(|&y| {
            let p = (10f64.powf(y) - 2.0) / U;
            if p <= 0.0 {
                return Ok(0.0);
            }
            Ok(fading.pdf(Approach::Power, p)? * (p * U + 2.0) * std::f64::consts::LN_10 / U)
        })
        .collect::<Result<Vec<f64>, fadenet::channel::ChannelError>>()
        .map_err(js_err)?;
    let bins = 60;
    let edges = linspace(lo, hi, bins + 1);
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(json!({
        "x": x,
        "pdf": pdf,
        "bins": centers,
        "hist": histogram(&scaled, lo, hi, bins),
        "ideal_mean": fading.mean(Approach::Power),
        "sample_mean": raw.iter().sum::<f64>() / n as f64,
    })
    .to_string())
}

/// Overlapped area of two Gaussian samples, with both density estimates.
#[wasm_bindgen]
pub fn overlap(mean_a: f64, sd_a: f64, mean_b: f64, sd_b: f64, n: usize, bandwidth: f64, seed: u64) -> Result<String, JsError> {
    let n = n.clamp(2, 50_000);
    let draw = |mean: f64, sd: f64, stream: u32| -> Result<Vec<f64>, JsError> {
        let dist = Normal::new(mean, sd).map_err(js_err)?;
        let mut rng = derive(seed, Domain::Samples, stream, 0);
        Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
    };
    let (a, b) = (draw(mean_a, sd_a, 0)?, draw(mean_b, sd_b, 1)?);
    let cfg = KdeConfig {
        bandwidth,
        ..KdeConfig::default()
    };
    let oa = oa_local(&a, &b, &cfg).map_err(js_err)?;
    let lo = a.iter().chain(&b).cloned().fold(f64::MAX, f64::min) - 3.0 * bandwidth;
    let hi = a.iter().chain(&b).cloned().fold(f64::MIN, f64::max) + 3.0 * bandwidth;
    let x = linspace(lo, hi, 300);
    Ok(json!({
        "x": x,
        "a": kde(&a, bandwidth, &x).map_err(js_err)?,
        "b": kde(&b, bandwidth, &x).map_err(js_err)?,
        "oa": oa.value,
        "grid": oa.grid,
    })
    .to_string())
}

/// A small FNN trained in the page on the distance dataset.
#[wasm_bindgen]
pub struct FnnPlayground {
    config: FnnConfig,
    state: FnnState,
    train: Dataset,
    val: Dataset,
    conditioner: Conditioner,
    eval: EvalSet,
    plan: EvalPlan,
    losses: Vec<f64>,
}

#[wasm_bindgen]
impl FnnPlayground {
    #[wasm_bindgen(constructor)]
    pub fn new(n_per_distance: usize, layers: usize, units: usize, seed: u64) -> Result<FnnPlayground, JsError> {
        let pool = generate_approach2(
            n_per_distance.clamp(10, 5000),
            &ChannelParams::distance_experiment(),
            &NoiseParams::disabled(),
            &paper_distances(),
            MRule::paper(),
            seed,
        )
        .map_err(js_err)?;
        let (train, val) = split(&pool, 0.8, seed).map_err(js_err)?;
        let config = FnnConfig {
            num_layer: layers.clamp(1, 6),
            num_unit: units.clamp(2, 128),
            epochs: 0,
            batch_size: 256,
            checkpoint_every: u64::MAX,
            seed,
            ..FnnConfig::default()
        };
        let state = FnnState::new(&config, &train).map_err(js_err)?;
        let conditioner = Conditioner::new(&train.meta, config.encoding).map_err(js_err)?;
        let plan = EvalPlan {
            per_category: 300,
            ..EvalPlan::default()
        };
        let eval = EvalSet::new(&train.meta, &plan).map_err(js_err)?;
        Ok(Self {
            config,
            state,
            train,
            val,
            conditioner,
            eval,
            plan,
            losses: Vec::new(),
        })
    }

    pub fn epoch(&self) -> u64 {
        self.state.epoch
    }

    pub fn distances(&self) -> Vec<f64> {
        paper_distances()
    }

    /// Runs `epochs` more epochs and returns the validation loss history.
    pub fn train(&mut self, epochs: u32) -> Result<Vec<f64>, JsError> {
        self.config.epochs = self.state.epoch + u64::from(epochs);
        let report = train_fnn(&mut self.state, &self.train, &self.val, &self.config, &mut |_| Ok(())).map_err(js_err)?;
        self.losses.extend(report.rows.iter().map(|(_, v)| v[1]));
        Ok(self.losses.clone())
    }

    /// Model output and genuine training targets (log domain) for one
    /// distance category, with quantiles on an even grid.
    pub fn sample(&self, category: usize, n: usize) -> Result<String, JsError> {
        let n = n.clamp(2, 20_000);
        let rs: Vec<[f64; 1]> = (0..n).map(|i| [(i as f64 + 0.5) / n as f64]).collect();
        let cond = self
            .conditioner
            .batch(rs.iter().map(|r| (category, &r[..])))
            .map_err(js_err)?;
        let out = self.state.net.predict(&cond).map_err(js_err)?;
        let generated: Vec<f64> = (0..n).map(|i| out.row(i)[0]).collect();
        let genuine: Vec<f64> = self
            .train
            .samples
            .iter()
            .filter(|s| s.category as usize == category)
            .map(|s| s.target[0])
            .collect();
        Ok(json!({ "generated": generated, "genuine": genuine }).to_string())
    }

    /// ScaledPE and average overlapped area of the current weights.
    pub fn evaluate(&self) -> Result<String, JsError> {
        let ckpt = Checkpoint {
            epoch: self.state.epoch,
            model: Model::Fnn {
                net: self.state.net.clone(),
                adam: self.state.adam.clone(),
            },
            config: ModelConfig::Fnn(self.config.clone()),
            dataset_fingerprint: String::new(),
            data_meta: self.train.meta.clone(),
        };
        let e = evaluate(&ckpt, &self.eval, &self.plan, true).map_err(js_err)?;
        let local: Vec<f64> = e.oa.as_ref().map(|o| o[0].local.iter().map(|l| l.value).collect()).unwrap_or_default();
        Ok(json!({
            "epoch": e.epoch,
            "scaled_pe": e.scaled_pe,
            "oa": e.oa_average,
            "oa_local": local,
        })
        .to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn channel_curve_histogram_tracks_density() {
        let v = parse(&channel_curves(1.0, 150.0, 20_000, 1).unwrap_or_else(|_| panic!()));
        let (ideal, sample) = (v["ideal_mean"].as_f64().unwrap(), v["sample_mean"].as_f64().unwrap());
        assert!(((sample - ideal) / ideal).abs() < 0.05);
        let x: Vec<f64> = serde_json::from_value(v["x"].clone()).unwrap();
        let pdf: Vec<f64> = serde_json::from_value(v["pdf"].clone()).unwrap();
        let mass: f64 = x.windows(2).zip(pdf.windows(2)).map(|(x, p)| (x[1] - x[0]) * (p[0] + p[1]) / 2.0).sum();
        assert!((mass - 1.0).abs() < 0.02, "{mass}");
    }

    #[test]
    fn overlap_extremes() {
        let same = parse(&overlap(0.0, 1.0, 0.0, 1.0, 2000, 0.3, 2).unwrap_or_else(|_| panic!()));
        assert!(same["oa"].as_f64().unwrap() > 0.9);
        let apart = parse(&overlap(0.0, 0.1, 50.0, 0.1, 500, 0.3, 2).unwrap_or_else(|_| panic!()));
        assert!(apart["oa"].as_f64().unwrap() < 0.02);
    }

    #[test]
    fn playground_trains_and_scores() {
        let mut p = FnnPlayground::new(60, 2, 16, 3).unwrap_or_else(|_| panic!());
        let losses = p.train(3).unwrap_or_else(|_| panic!());
        assert_eq!((p.epoch(), losses.len()), (3, 4));
        assert!(losses[3] < losses[0]);
        let s = parse(&p.sample(4, 50).unwrap_or_else(|_| panic!()));
        assert_eq!(s["generated"].as_array().unwrap().len(), 50);
        let e = parse(&p.evaluate().unwrap_or_else(|_| panic!()));
        assert!(e["scaled_pe"].as_f64().unwrap().is_finite());
        assert_eq!(e["oa_local"].as_array().unwrap().len(), 30);
    }
}
