//! Fixed-sample size derivation and the naive mandatory recalculation rule.
//!
//! The naive rule recomputes, at every interim outcome, the smallest final
//! sample size whose predictive power reaches `1 − β_cond` while keeping the
//! conditional type-I error of the base single-stage design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{chebyshev_abscissae, z_domain, SingleStageDesign, TwoStageDesign};
use crate::error::{domain, Error, Result};
use crate::power::{cp, expected_power, positive_posterior_rule, pp_with_rule, InterimObservation};
use crate::stats::{norm_quantile, norm_sf, TruncatedNormalPrior};

/// Largest sample size considered by [`single_stage_sample_size`].
pub const SAMPLE_SIZE_CAP: u64 = 100_000;

/// Smallest integer `n` with expected power at least `ep_target` for the
/// one-sided level-`alpha` test.
pub fn single_stage_sample_size(
    prior: &TruncatedNormalPrior,
    alpha: f64,
    ep_target: f64,
) -> Result<SingleStageDesign> {
    single_stage_sample_size_capped(prior, alpha, ep_target, SAMPLE_SIZE_CAP)
}

pub fn single_stage_sample_size_capped(
    prior: &TruncatedNormalPrior,
    alpha: f64,
    ep_target: f64,
    cap: u64,
) -> Result<SingleStageDesign> {
    if !(alpha > 0.0 && alpha < 1.0) || !(ep_target > 0.0 && ep_target < 1.0) {
        return domain("alpha and the expected power target must lie in (0, 1)");
    }
    let c = norm_quantile(1.0 - alpha)?;
    let ep = |n: u64| expected_power(prior, n as f64, c);
    if ep(cap)? < ep_target {
        return Err(Error::Infeasible(format!(
            "expected power {ep_target} not reached with {cap} subjects"
        )));
    }
    let (mut lo, mut hi) = (0u64, cap);
    // invariant: ep(hi) >= target, and lo == 0 or ep(lo) < target
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ep(mid)? >= ep_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SingleStageDesign::new(hi as f64, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveRecalcPolicy {
    pub beta_cond: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub prior: TruncatedNormalPrior,
    pub base: SingleStageDesign,
    pub m: f64,
}

impl NaiveRecalcPolicy {
    pub fn new(
        beta_cond: f64,
        n_min: f64,
        n_max: f64,
        prior: TruncatedNormalPrior,
        base: SingleStageDesign,
        m: f64,
    ) -> Result<Self> {
        let p = Self { beta_cond, n_min, n_max, prior, base, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if !(self.beta_cond > 0.0 && self.beta_cond < 1.0) {
            return domain("conditional type-II budget must lie in (0, 1)");
        }
        if !(self.m >= 1.0 && self.m < self.n_min && self.n_min <= self.n_max && self.n_max.is_finite()) {
            return domain("need 1 <= m < n_min <= n_max");
        }
        if !(self.m < self.base.n) {
            return domain("interim size must be below the base design's sample size");
        }
        if !(self.prior.upper > 0.0) {
            return domain("prior must put mass on positive effects");
        }
        Ok(())
    }
}

/// Outcome of a pointwise recalculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecalcResult {
    pub n_prime: f64,
    pub c_prime: f64,
    pub conditional_error_budget: f64,
    pub pp_target: f64,
    pub pp_achieved: f64,
    pub stopped_for_futility: bool,
    /// predictive power at the largest admissible sample size
    pub max_achievable_pp: f64,
}

/// Critical value at final size `n_prime` that spends exactly the
/// conditional error whose standardised quantile is `q`.
#[inline]
pub(crate) fn binding_critical_value(m: f64, n_prime: f64, z_m: f64, q: f64) -> f64 {
    if q.is_infinite() {
        return q;
    }
    let tau = m / n_prime;
    tau.sqrt() * z_m + (1.0 - tau).sqrt() * q
}

/// Smallest `n′` in `[lo, hi]` with `pp(n′) ≥ target`, where `pp` is
/// nondecreasing; `None` if even `hi` falls short.
pub(crate) fn minimal_size(pp: impl Fn(f64) -> f64, lo: f64, hi: f64, target: f64) -> Option<f64> {
    if pp(hi) < target {
        return None;
    }
    if pp(lo) >= target {
        return Some(lo);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-9 * b.max(1.0) {
        let mid = 0.5 * (a + b);
        if pp(mid) >= target {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some(b)
}

struct PointwiseProblem {
    m: f64,
    z_m: f64,
    q: f64,
    rule: Vec<(f64, f64)>,
}

impl PointwiseProblem {
    fn new(policy: &NaiveRecalcPolicy, z_m: f64) -> Result<Self> {
        let (m, n, c) = (policy.m, policy.base.n, policy.base.c);
        let tau = m / n;
        let q = (c - tau.sqrt() * z_m) / (1.0 - tau).sqrt();
        let rule = positive_posterior_rule(&policy.prior, InterimObservation::new(m, z_m)?)?;
        Ok(Self { m, z_m, q, rule })
    }

    fn c_prime(&self, n_prime: f64) -> f64 {
        binding_critical_value(self.m, n_prime, self.z_m, self.q)
    }

    fn pp(&self, n_prime: f64) -> f64 {
        pp_with_rule(&self.rule, self.m, n_prime, self.z_m, self.c_prime(n_prime))
    }
}

/// Minimal final sample size meeting the predictive-power target under the
/// base design's conditional error; futility stop if `n_max` is not enough.
pub fn naive_recalc_pointwise(policy: &NaiveRecalcPolicy, z_m: f64) -> Result<RecalcResult> {
    policy.validate()?;
    let problem = PointwiseProblem::new(policy, z_m)?;
    let target = 1.0 - policy.beta_cond;
    let budget = norm_sf(problem.q);
    let max_pp = problem.pp(policy.n_max);
    Ok(match minimal_size(|n| problem.pp(n), policy.n_min, policy.n_max, target) {
        None => RecalcResult {
            n_prime: policy.m,
            c_prime: f64::INFINITY,
            conditional_error_budget: budget,
            pp_target: target,
            pp_achieved: 0.0,
            stopped_for_futility: true,
            max_achievable_pp: max_pp,
        },
        Some(n_prime) => RecalcResult {
            n_prime,
            c_prime: problem.c_prime(n_prime),
            conditional_error_budget: budget,
            pp_target: target,
            pp_achieved: problem.pp(n_prime),
            stopped_for_futility: false,
            max_achievable_pp: max_pp,
        },
    })
}

/// Interim outcome below which the naive rule stops for futility.
pub fn naive_futility_boundary(policy: &NaiveRecalcPolicy) -> Result<f64> {
    policy.validate()?;
    let target = 1.0 - policy.beta_cond;
    let (lo, hi) = z_domain(&policy.prior, policy.m);
    let slack = |z: f64| {
        PointwiseProblem::new(policy, z).map(|p| p.pp(policy.n_max) - target).unwrap_or(f64::NAN)
    };
    if slack(lo) >= 0.0 {
        return Ok(lo);
    }
    if slack(hi) < 0.0 {
        return Err(Error::Infeasible("predictive power target unreachable for every interim outcome".into()));
    }
    // keep `a` infeasible so that z ≤ f always means a futility stop
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-9 {
        let mid = 0.5 * (a + b);
        if slack(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(a)
}

/// The two-stage design induced by applying the naive rule at every interim
/// outcome. It never stops early for efficacy; the efficacy boundary is the
/// upper end of the integration range. `grid_size` validation points over
/// `[f − 0.5, 4]` check the interpolant.
pub fn naive_adaptive_design(policy: &NaiveRecalcPolicy, grid_size: usize) -> Result<TwoStageDesign> {
    if grid_size < 2 {
        return domain("validation grid needs at least two points");
    }
    let f = naive_futility_boundary(policy)?;
    let (_, e) = z_domain(&policy.prior, policy.m);
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| f - 0.5 + (4.5 - f) * i as f64 / (grid_size - 1) as f64)
        .filter(|&z| z > f && z < e)
        .collect();
    let reference: Vec<RecalcResult> = grid
        .par_iter()
        .map(|&z| naive_recalc_pointwise(policy, z))
        .collect::<Result<_>>()?;
    let mut k = 32;
    loop {
        let x = chebyshev_abscissae(f, e, k);
        let pivots: Vec<RecalcResult> = x
            .par_iter()
            .map(|&z| naive_recalc_pointwise(policy, z))
            .collect::<Result<_>>()?;
        if let Some(bad) = pivots.iter().position(|r| r.stopped_for_futility) {
            return Err(Error::Infeasible(format!("pivot at z_m = {} stops for futility", x[bad])));
        }
        let design = TwoStageDesign::new(
            policy.m,
            f,
            e,
            pivots.iter().map(|r| r.n_prime).collect(),
            pivots.iter().map(|r| r.c_prime).collect(),
        )?;
        let accurate = grid.iter().zip(&reference).all(|(&z, r)| {
            r.stopped_for_futility
                || ((design.n_of(z) - r.n_prime).abs() <= 0.5 && (design.c_of(z) - r.c_prime).abs() <= 1e-3)
        });
        if accurate {
            return Ok(design);
        }
        if k >= 1024 {
            return Err(Error::Infeasible("pivot interpolation did not reach the required accuracy".into()));
        }
        k *= 2;
    }
}

/// Conditional error of a single-stage design at the interim outcome.
pub fn single_stage_conditional_error(base: &SingleStageDesign, m: f64, z_m: f64) -> f64 {
    cp(m, base.n, z_m, base.c, 0.0)
}
