//! Special functions behind the fading channel: log-gamma, the error
//! function and the regularized lower incomplete gamma with its inverse.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("{function}: argument {value} outside its domain")]
    Domain { function: &'static str, value: f64 },
    #[error("{function}: no convergence after {iterations} iterations (last bracket [{lo}, {hi}])")]
    NoConvergence {
        function: &'static str,
        iterations: usize,
        lo: f64,
        hi: f64,
    },
}

/// Convergence control for iterative inversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    rel_tol: f64,
    max_iter: usize,
}

impl Tolerance {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self, SpecError> {
        if !(rel_tol > 0.0 && rel_tol < 1e-6) {
            return Err(SpecError::Domain {
                function: "Tolerance::rel_tol",
                value: rel_tol,
            });
        }
        if max_iter < 20 {
            return Err(SpecError::Domain {
                function: "Tolerance::max_iter",
                value: max_iter as f64,
            });
        }
        Ok(Self { rel_tol, max_iter })
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_tol: 1e-13,
            max_iter: 200,
        }
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64, SpecError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(SpecError::Domain {
            function: "ln_gamma",
            value: x,
        });
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    // The series is accurate only for x >= 1/2; reflect below that.
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    // Exact zeros at 1 and 2 avoid a relative blow-up near the roots.
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function, computed through [`ln_gamma`].
pub fn gamma(x: f64) -> Result<f64, SpecError> {
    ln_gamma(x).map(f64::exp)
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Standard normal CDF Φ(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density φ(x).
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

const GAMMA_MAX_ITER: usize = 500;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma P(s, y) = γ(s, y) / Γ(s).
pub fn reg_lower_gamma(s: f64, y: f64) -> Result<f64, SpecError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(SpecError::Domain {
            function: "reg_lower_gamma(s)",
            value: s,
        });
    }
    if y.is_nan() || y < 0.0 {
        return Err(SpecError::Domain {
            function: "reg_lower_gamma(y)",
            value: y,
        });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y == f64::INFINITY {
        return Ok(1.0);
    }
    let (p, _) = incomplete_pair(s, y)?;
    Ok(p)
}

/// Regularized upper incomplete gamma Q(s, y) = 1 − P(s, y).
pub fn reg_upper_gamma(s: f64, y: f64) -> Result<f64, SpecError> {
    reg_lower_gamma(s, y)?;
    if y == 0.0 {
        return Ok(1.0);
    }
    if y == f64::INFINITY {
        return Ok(0.0);
    }
    let (_, q) = incomplete_pair(s, y)?;
    Ok(q)
}

// Series below s + 1, Lentz continued fraction for the complement above.
fn incomplete_pair(s: f64, y: f64) -> Result<(f64, f64), SpecError> {
    let prefactor = (-y + s * y.ln() - ln_gamma_unchecked(s)).exp();
    if y < s + 1.0 {
        let mut ap = s;
        let mut term = 1.0 / s;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= y / ap;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                let p = (prefactor * sum).min(1.0);
                return Ok((p, 1.0 - p));
            }
        }
        Err(SpecError::NoConvergence {
            function: "reg_lower_gamma(series)",
            iterations: GAMMA_MAX_ITER,
            lo: y,
            hi: y,
        })
    } else {
        let mut b = y + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                let q = (prefactor * h).min(1.0);
                return Ok((1.0 - q, q));
            }
        }
        Err(SpecError::NoConvergence {
            function: "reg_lower_gamma(continued fraction)",
            iterations: GAMMA_MAX_ITER,
            lo: y,
            hi: y,
        })
    }
}

/// Inverse of [`reg_lower_gamma`] in its second argument: the `x` with
/// `P(s, x) = p`.
///
/// Safeguarded Newton iteration from a Wilson–Hilferty starting point; a step
/// that leaves the current bracket is replaced by bisection.
pub fn inv_reg_lower_gamma(s: f64, p: f64, tol: Tolerance) -> Result<f64, SpecError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(SpecError::Domain {
            function: "inv_reg_lower_gamma(s)",
            value: s,
        });
    }
    if !(0.0..1.0).contains(&p) {
        return Err(SpecError::Domain {
            function: "inv_reg_lower_gamma(p)",
            value: p,
        });
    }
    if p == 0.0 {
        return Ok(0.0);
    }

    let ln_gamma_s = ln_gamma_unchecked(s);
    let mut x = initial_guess(s, p);

    // Bracket: P(lo) <= p <= P(hi).
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut probe = x.max(f64::MIN_POSITIVE);
    for _ in 0..2000 {
        if reg_lower_gamma(s, probe)? < p {
            lo = probe;
            probe *= 2.0;
        } else {
            hi = probe;
            break;
        }
    }
    if !hi.is_finite() {
        return Err(SpecError::NoConvergence {
            function: "inv_reg_lower_gamma(bracket)",
            iterations: 2000,
            lo,
            hi,
        });
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..tol.max_iter() {
        let err = reg_lower_gamma(s, x)? - p;
        if err.abs() < tol.rel_tol() * p.max(1e-300).min(1.0) || err == 0.0 {
            return Ok(x);
        }
        if err < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((s - 1.0) * x.ln() - x - ln_gamma_s).exp();
        let mut next = if density > 0.0 && density.is_finite() {
            x - err / density
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= f64::EPSILON * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(SpecError::NoConvergence {
        function: "inv_reg_lower_gamma",
        iterations: tol.max_iter(),
        lo,
        hi,
    })
}

fn initial_guess(s: f64, p: f64) -> f64 {
    if s > 1.0 {
        // Wilson–Hilferty with a rational normal-quantile approximation.
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        let w = 1.0 - 1.0 / (9.0 * s) - z / (3.0 * s.sqrt());
        (s * w * w * w).max(1e-3)
    } else {
        let t = 1.0 - s * (0.253 + s * 0.12);
        if p < t {
            (p / t).powf(1.0 / s)
        } else {
            1.0 - (1.0 - (p - t) / (1.0 - t)).ln()
        }
    }
}
