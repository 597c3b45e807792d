//! Conditional power and its estimators at an interim analysis.
//!
//! With unit-variance outcomes the cumulative statistic `Z_n` given
//! `Z_m = z_m` is normal with mean `√n·θ + √τ·(z_m − √m·θ)` and variance
//! `1 − τ`, `τ = m/n`. Conditional power is the upper tail of that law
//! beyond the critical value. Assumed (ACP), observed (OCP) and predictive
//! power (PP) are three ways of estimating it; PP averages over the
//! posterior of a truncated normal prior conditioned on a positive effect.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::stats::{default_quad_order, norm_pdf, norm_sf, TruncatedNormalPrior};

/// Interim sample size and the observed test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterimObservation {
    pub m: f64,
    pub z_m: f64,
}

impl InterimObservation {
    pub fn new(m: f64, z_m: f64) -> Result<Self> {
        if !(m >= 1.0 && m.is_finite()) {
            return domain(format!("interim sample size must be at least 1, got {m}"));
        }
        if !z_m.is_finite() {
            return domain("interim statistic must be finite");
        }
        Ok(Self { m, z_m })
    }

    /// Maximum-likelihood estimate `z_m / √m`.
    pub fn observed_effect(&self) -> f64 {
        self.z_m / self.m.sqrt()
    }
}

/// Conditional power without argument checks. Infinite critical values
/// encode the stopping decisions: `+∞` never rejects, `−∞` always does.
#[inline]
pub(crate) fn cp(m: f64, n: f64, z_m: f64, c: f64, theta: f64) -> f64 {
    if c == f64::INFINITY {
        return 0.0;
    }
    if c == f64::NEG_INFINITY {
        return 1.0;
    }
    let tau = m / n;
    let arg = (c - n.sqrt() * theta - tau.sqrt() * z_m + m / n.sqrt() * theta) / (1.0 - tau).sqrt();
    norm_sf(arg)
}

fn check_sizes(m: f64, n: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return domain(format!("interim size must be positive, got {m}"));
    }
    if !(n > m && n.is_finite()) {
        return domain(format!("final size {n} must exceed the interim size {m}"));
    }
    Ok(())
}

/// `Pr_θ[Z_n > c | Z_m = z_m]`.
pub fn conditional_power(m: f64, n: f64, z_m: f64, c: f64, theta: f64) -> Result<f64> {
    check_sizes(m, n)?;
    if !z_m.is_finite() || !theta.is_finite() || c.is_nan() {
        return domain("conditional power needs finite z_m and theta and a non-NaN critical value");
    }
    Ok(cp(m, n, z_m, c, theta))
}

/// Conditional power plugged in at a fixed point alternative.
pub fn assumed_cp(obs: InterimObservation, n: f64, c: f64, theta1: f64) -> Result<f64> {
    if !(theta1 > 0.0) {
        return domain(format!("point alternative must be positive, got {theta1}"));
    }
    conditional_power(obs.m, n, obs.z_m, c, theta1)
}

/// Conditional power plugged in at the interim estimate `z_m / √m`.
pub fn observed_cp(obs: InterimObservation, n: f64, c: f64) -> Result<f64> {
    conditional_power(obs.m, n, obs.z_m, c, obs.observed_effect())
}

/// Conjugate update of a truncated normal prior after observing
/// `z_m ~ N(√m·θ, 1)`. The truncation bounds carry over.
pub fn posterior(prior: &TruncatedNormalPrior, obs: InterimObservation) -> TruncatedNormalPrior {
    let precision = 1.0 / (prior.sigma * prior.sigma) + obs.m;
    let variance = 1.0 / precision;
    let mu = variance * (prior.mu / (prior.sigma * prior.sigma) + obs.m.sqrt() * obs.z_m);
    TruncatedNormalPrior { mu, sigma: variance.sqrt(), ..*prior }
}

/// Predictive power given a discretised positive-effect posterior.
#[inline]
pub(crate) fn pp_with_rule(rule: &[(f64, f64)], m: f64, n: f64, z_m: f64, c: f64) -> f64 {
    rule.iter().map(|&(t, w)| w * cp(m, n, z_m, c, t)).sum()
}

/// Discretised posterior conditioned on a positive effect.
pub(crate) fn positive_posterior_rule(
    prior: &TruncatedNormalPrior,
    obs: InterimObservation,
) -> Result<Vec<(f64, f64)>> {
    Ok(posterior(prior, obs).condition_positive()?.rule(default_quad_order()))
}

/// `Pr_φ[Z_n > c | Θ > 0, Z_m = z_m]`: conditional power averaged over the
/// posterior restricted to positive effects.
pub fn predictive_power(
    prior: &TruncatedNormalPrior,
    obs: InterimObservation,
    n: f64,
    c: f64,
) -> Result<f64> {
    check_sizes(obs.m, n)?;
    let rule = positive_posterior_rule(prior, obs)?;
    Ok(pp_with_rule(&rule, obs.m, n, obs.z_m, c))
}

/// `Pr_θ[Z_n > c]` for the fixed-sample test.
#[inline]
pub fn rejection_probability(n: f64, c: f64, theta: f64) -> f64 {
    if c == f64::INFINITY {
        return 0.0;
    }
    if c == f64::NEG_INFINITY {
        return 1.0;
    }
    norm_sf(c - n.sqrt() * theta)
}

/// Rejection probability averaged over the prior conditioned on `Θ ≥ 0`.
pub fn expected_power(prior: &TruncatedNormalPrior, n: f64, c: f64) -> Result<f64> {
    if !(n > 0.0) {
        return domain(format!("sample size must be positive, got {n}"));
    }
    let positive = prior.condition_positive()?;
    Ok(positive.expect(|t| rejection_probability(n, c, t)))
}

/// Prior-predictive density of `Z_m` under the unconditional prior.
pub fn marginal_zm_density(prior: &TruncatedNormalPrior, m: f64, z_m: f64) -> f64 {
    let sm = m.sqrt();
    prior.expect(|t| norm_pdf(z_m - sm * t))
}
