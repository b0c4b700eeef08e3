//! Nakagami-m fading with exponential path loss and additive Gaussian noise.
//!
//! Two observation domains are supported. [`Approach::Amplitude`] observes
//! the received signal magnitude, which is Nakagami-m distributed with
//! spread `P̄`. [`Approach::Power`] observes received power, which is
//! Gamma(m, P̄/m) distributed. `P̄` is the mean received power given by
//! [`ChannelParams::path_loss`]. The power sample is always the square of
//! the amplitude sample for the same quantile.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{self, SpecError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("{what} = {value} is outside the domain")]
    Domain { what: &'static str, value: f64 },
    #[error("noise sampling requested while noise is disabled")]
    NoiseDisabled,
    #[error(transparent)]
    Special(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    /// Approach 1: signal voltage magnitude.
    #[serde(alias = "approach1")]
    Amplitude,
    /// Approach 2: power in watts.
    #[serde(alias = "approach2")]
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub m: f64,
    pub eta: f64,
    pub d0: f64,
    pub alpha: f64,
    pub pt: f64,
}

impl ChannelParams {
    pub fn new(m: f64, eta: f64, d0: f64, alpha: f64, pt: f64) -> Result<Self, ChannelError> {
        let params = Self { m, eta, d0, alpha, pt };
        params.validate()?;
        Ok(params)
    }

    /// QAM experiment: m = 1, η = 1, d₀ = 100, α = 2. `pt` is set per
    /// constellation axis at generation time.
    pub fn qam_experiment() -> Self {
        Self {
            m: 1.0,
            eta: 1.0,
            d0: 100.0,
            alpha: 2.0,
            pt: 1.0,
        }
    }

    /// Distance experiment: P_t = 0.28183815 W, η = 7.29e-14, d₀ = 100, α = 2.
    /// `m` is replaced per distance by the generator's m-rule.
    pub fn distance_experiment() -> Self {
        Self {
            m: 1.0,
            eta: 7.29e-14,
            d0: 100.0,
            alpha: 2.0,
            pt: 0.281_838_15,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let check = |name: &'static str, value: f64, ok: bool| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(ChannelError::InvalidParam { name, value })
            }
        };
        check("m", self.m, self.m >= 0.5)?;
        check("eta", self.eta, self.eta > 0.0)?;
        check("d0", self.d0, self.d0 > 0.0)?;
        check("alpha", self.alpha, self.alpha > 0.0)?;
        check("pt", self.pt, self.pt > 0.0)?;
        Ok(())
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn with_pt(mut self, pt: f64) -> Self {
        self.pt = pt;
        self
    }

    /// Mean received power `P_t·η·(d₀/d)^α`.
    pub fn path_loss(&self, d: f64) -> Result<f64, ChannelError> {
        check_distance(d)?;
        Ok(self.pt * self.eta * (self.d0 / d).powf(self.alpha))
    }

    pub fn fading(&self, d: f64) -> Result<Fading, ChannelError> {
        self.validate()?;
        Fading::new(self.m, self.path_loss(d)?)
    }

    pub fn pdf(&self, approach: Approach, d: f64, x: f64) -> Result<f64, ChannelError> {
        self.fading(d)?.pdf(approach, x)
    }

    pub fn cdf(&self, approach: Approach, d: f64, x: f64) -> Result<f64, ChannelError> {
        self.fading(d)?.cdf(approach, x)
    }

    /// Inverse-CDF sample for quantile `r`.
    pub fn sample_received(&self, approach: Approach, d: f64, r: f64) -> Result<f64, ChannelError> {
        self.fading(d)?.quantile(approach, r)
    }

    pub fn ideal_mean(&self, approach: Approach, d: f64) -> Result<f64, ChannelError> {
        Ok(self.fading(d)?.mean(approach))
    }

    pub fn ideal_var(&self, approach: Approach, d: f64) -> Result<f64, ChannelError> {
        Ok(self.fading(d)?.variance(approach))
    }
}

fn check_distance(d: f64) -> Result<(), ChannelError> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(ChannelError::Domain {
            what: "distance",
            value: d,
        })
    }
}

/// Fading law at one distance: shape `m` and mean power `P̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fading {
    m: f64,
    mean_power: f64,
    ln_gamma_m: f64,
}

impl Fading {
    pub fn new(m: f64, mean_power: f64) -> Result<Self, ChannelError> {
        if !(m.is_finite() && m >= 0.5) {
            return Err(ChannelError::InvalidParam { name: "m", value: m });
        }
        if !(mean_power.is_finite() && mean_power > 0.0) {
            return Err(ChannelError::InvalidParam {
                name: "mean_power",
                value: mean_power,
            });
        }
        Ok(Self {
            m,
            mean_power,
            ln_gamma_m: specfun::ln_gamma(m)?,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn mean_power(&self) -> f64 {
        self.mean_power
    }

    fn check_x(x: f64) -> Result<(), ChannelError> {
        if x.is_nan() || x < 0.0 {
            Err(ChannelError::Domain {
                what: "observation",
                value: x,
            })
        } else {
            Ok(())
        }
    }

    pub fn pdf(&self, approach: Approach, x: f64) -> Result<f64, ChannelError> {
        Self::check_x(x)?;
        let (m, p) = (self.m, self.mean_power);
        let log_scale = m * (m / p).ln() - self.ln_gamma_m;
        let value = match approach {
            Approach::Amplitude => {
                if x == 0.0 {
                    return Ok(if m == 0.5 { 2.0 * (log_scale).exp() } else { 0.0 });
                }
                2.0 * (log_scale + (2.0 * m - 1.0) * x.ln() - m * x * x / p).exp()
            }
            Approach::Power => {
                if x == 0.0 {
                    return Ok(match m {
                        m if m < 1.0 => f64::INFINITY,
                        m if m == 1.0 => log_scale.exp(),
                        _ => 0.0,
                    });
                }
                (log_scale + (m - 1.0) * x.ln() - m * x / p).exp()
            }
        };
        Ok(value)
    }

    pub fn cdf(&self, approach: Approach, x: f64) -> Result<f64, ChannelError> {
        Self::check_x(x)?;
        let y = match approach {
            Approach::Amplitude => self.m * x * x / self.mean_power,
            Approach::Power => self.m * x / self.mean_power,
        };
        Ok(specfun::reg_lower_gamma(self.m, y)?)
    }

    pub fn quantile(&self, approach: Approach, r: f64) -> Result<f64, ChannelError> {
        self.quantile_with(approach, r, Tolerance::default())
    }

    pub fn quantile_with(&self, approach: Approach, r: f64, tol: Tolerance) -> Result<f64, ChannelError> {
        if !(0.0..1.0).contains(&r) {
            return Err(ChannelError::Domain { what: "quantile", value: r });
        }
        let power = self.mean_power / self.m * specfun::inv_reg_lower_gamma(self.m, r, tol)?;
        Ok(match approach {
            Approach::Amplitude => power.sqrt(),
            Approach::Power => power,
        })
    }

    /// Γ(m+½)/Γ(m).
    fn gamma_ratio(&self) -> f64 {
        (specfun::ln_gamma_unchecked(self.m + 0.5) - self.ln_gamma_m).exp()
    }

    pub fn mean(&self, approach: Approach) -> f64 {
        match approach {
            Approach::Amplitude => self.gamma_ratio() * (self.mean_power / self.m).sqrt(),
            Approach::Power => self.mean_power,
        }
    }

    pub fn variance(&self, approach: Approach) -> f64 {
        match approach {
            Approach::Amplitude => {
                let g = self.gamma_ratio();
                self.mean_power * (1.0 - g * g / self.m)
            }
            Approach::Power => self.mean_power * self.mean_power / self.m,
        }
    }
}

/// Additive Gaussian noise.
///
/// `mean` is in watts. `variance` follows the same convention as `mean`: it
/// is multiplied by `unit_scale` to give the noise variance in rescaled
/// units, so `mean = 1.256e-15, variance = 1e-15, unit_scale = 1e14` is noise
/// N(0.1256, 0.1) in rescaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub enabled: bool,
    pub mean: f64,
    pub variance: f64,
    #[serde(default = "default_unit_scale")]
    pub unit_scale: f64,
}

pub const DEFAULT_UNIT_SCALE: f64 = 1e14;

fn default_unit_scale() -> f64 {
    DEFAULT_UNIT_SCALE
}

impl NoiseParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            mean: 0.0,
            variance: 0.0,
            unit_scale: DEFAULT_UNIT_SCALE,
        }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Self {
            enabled: true,
            mean,
            variance,
            unit_scale: DEFAULT_UNIT_SCALE,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(ChannelError::InvalidParam {
                name: "noise.variance",
                value: self.variance,
            });
        }
        if !(self.unit_scale.is_finite() && self.unit_scale > 0.0) {
            return Err(ChannelError::InvalidParam {
                name: "noise.unit_scale",
                value: self.unit_scale,
            });
        }
        if !self.mean.is_finite() {
            return Err(ChannelError::InvalidParam {
                name: "noise.mean",
                value: self.mean,
            });
        }
        Ok(())
    }

    /// Standard deviation of the noise in watts.
    pub fn std_dev(&self) -> f64 {
        (self.variance * self.unit_scale).sqrt() / self.unit_scale
    }

    /// Variance of the noise in watts².
    pub fn variance_watts(&self) -> f64 {
        let s = self.std_dev();
        s * s
    }

    /// One noise draw in watts.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, ChannelError> {
        if !self.enabled {
            return Err(ChannelError::NoiseDisabled);
        }
        self.validate()?;
        if self.variance == 0.0 {
            return Ok(self.mean);
        }
        let z: f64 = rng.sample(StandardNormal);
        Ok(self.mean + self.std_dev() * z)
    }
}
