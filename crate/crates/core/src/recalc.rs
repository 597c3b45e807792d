//! Consistent recalculation of a pre-planned two-stage design after the
//! planning prior has been revised.
//!
//! Both schemes keep the design's conditional type-I error. The fixed
//! conditional type-II scheme then asks for at least the predictive power
//! the original design promised under the original prior; the multiplier
//! scheme instead trades sample size against predictive power at the rate
//! implied by the original design's optimality conditions.

use serde::{Deserialize, Serialize};

use crate::design::TwoStageDesign;
use crate::error::{domain, Error, Result};
use crate::planners::{binding_critical_value, minimal_size, single_stage_sample_size, RecalcResult};
use crate::power::{cp, positive_posterior_rule, pp_with_rule, InterimObservation};
use crate::stats::{isf_unchecked, norm_pdf, norm_sf, TruncatedNormalPrior};

/// Default recalculation cap: four times the single-stage sample size.
pub fn default_n_cap(prior: &TruncatedNormalPrior, alpha: f64, beta: f64) -> Result<f64> {
    Ok(4.0 * single_stage_sample_size(prior, alpha, 1.0 - beta)?.n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisedScenario {
    pub original_design: TwoStageDesign,
    pub original_prior: TruncatedNormalPrior,
    pub revised_prior: TruncatedNormalPrior,
    pub m_prime: f64,
    pub z_m_prime: f64,
    /// largest admissible final sample size
    pub n_cap: f64,
}

/// Smallest continuation sample size of a design, on a fine grid.
fn min_continuation_n(d: &TwoStageDesign) -> f64 {
    let (f, e) = (d.futility_boundary(), d.efficacy_boundary());
    let grid = (1..2000).map(|i| f + (e - f) * i as f64 / 2000.0);
    grid.chain(d.pivot_abscissae().iter().copied())
        .map(|z| d.n_of(z))
        .fold(f64::INFINITY, f64::min)
}

impl RevisedScenario {
    pub fn new(
        original_design: TwoStageDesign,
        original_prior: TruncatedNormalPrior,
        revised_prior: TruncatedNormalPrior,
        m_prime: f64,
        z_m_prime: f64,
        n_cap: f64,
    ) -> Result<Self> {
        let s = Self { original_design, original_prior, revised_prior, m_prime, z_m_prime, n_cap };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.original_prior.validate()?;
        self.revised_prior.validate()?;
        if !(self.original_prior.upper > 0.0 && self.revised_prior.upper > 0.0) {
            return domain("both priors must put mass on positive effects");
        }
        if !(self.m_prime >= 1.0 && self.m_prime.is_finite()) || !self.z_m_prime.is_finite() {
            return domain("interim size must be at least 1 and the statistic finite");
        }
        if !(self.n_cap > self.m_prime) {
            return domain("sample size cap must exceed the interim size");
        }
        if self.m_prime > self.original_design.m() && self.m_prime >= min_continuation_n(&self.original_design) {
            return domain("a late interim analysis must precede every final analysis of the design");
        }
        Ok(())
    }
}

/// Probability that the design rejects given `Z_{m′} = z′` at effect
/// `theta`. For `m′ < m` the interim statistic is integrated over its
/// conditional law; for `m′ > m` the bridge law of `Z_m` given `Z_{m′}` is
/// used and the continuation is evaluated from `m′`.
pub fn design_rejection_given(d: &TwoStageDesign, m_prime: f64, z_prime: f64, theta: f64) -> Result<f64> {
    let m = d.m();
    if !(m_prime > 0.0) || !z_prime.is_finite() || !theta.is_finite() {
        return domain("need a positive interim size and finite statistic and effect");
    }
    if m_prime == m {
        return Ok(d.conditional_power(z_prime, theta));
    }
    let (mean, sd) = if m_prime < m {
        let r = m_prime / m;
        (r.sqrt() * z_prime + theta * (m - m_prime) / m.sqrt(), (1.0 - r).sqrt())
    } else {
        let r = m / m_prime;
        (r.sqrt() * z_prime, (1.0 - r).sqrt())
    };
    let e = d.efficacy_boundary();
    let efficacy_mass = norm_sf((e - mean) / sd);
    let nodes = d.continuation_nodes(mean - 12.0 * sd, mean + 12.0 * sd, 8, (0.25 * sd).min(0.5));
    let cont: f64 = nodes
        .iter()
        .map(|k| {
            let density = norm_pdf((k.z - mean) / sd) / sd;
            let reject = if m_prime < m { norm_sf(k.q - theta * k.s) } else { cp(m_prime, k.n, z_prime, k.c, theta) };
            k.w * density * reject
        })
        .sum();
    Ok((efficacy_mass + cont).clamp(0.0, 1.0))
}

/// Conditional type-I error of the design when the interim analysis happens
/// after `m′ < m` subjects.
pub fn conditional_error_early(d: &TwoStageDesign, m_prime: f64, z_prime: f64) -> Result<f64> {
    if !(m_prime < d.m()) {
        return domain(format!("interim size {m_prime} is not earlier than the planned {}", d.m()));
    }
    design_rejection_given(d, m_prime, z_prime, 0.0)
}

/// Conditional type-I error at any interim size, planned or not.
pub fn conditional_error_at(d: &TwoStageDesign, m_prime: f64, z_prime: f64) -> Result<f64> {
    design_rejection_given(d, m_prime, z_prime, 0.0)
}

/// Predictive power the original design promises given `Z_{m′} = z′`
/// under the original prior conditioned on a positive effect.
pub fn conditional_pp_target(
    d: &TwoStageDesign,
    prior_phi: &TruncatedNormalPrior,
    m_prime: f64,
    z_prime: f64,
) -> Result<f64> {
    if m_prime == d.m() {
        if !d.is_continuation(z_prime) {
            return Ok(d.conditional_error(z_prime));
        }
        let rule = positive_posterior_rule(prior_phi, InterimObservation::new(m_prime, z_prime)?)?;
        return Ok(pp_with_rule(&rule, m_prime, d.n_of(z_prime), z_prime, d.c_of(z_prime)));
    }
    let rule = positive_posterior_rule(prior_phi, InterimObservation::new(m_prime, z_prime)?)?;
    let mut total = 0.0;
    for (t, w) in rule {
        total += w * design_rejection_given(d, m_prime, z_prime, t)?;
    }
    Ok(total.clamp(0.0, 1.0))
}

struct Revision {
    m_prime: f64,
    z_prime: f64,
    budget: f64,
    q: f64,
    target: f64,
    rule: Vec<(f64, f64)>,
}

impl Revision {
    fn new(s: &RevisedScenario) -> Result<Self> {
        s.validate()?;
        let d = &s.original_design;
        let budget = conditional_error_at(d, s.m_prime, s.z_m_prime)?;
        let target = conditional_pp_target(d, &s.original_prior, s.m_prime, s.z_m_prime)?;
        let rule = positive_posterior_rule(&s.revised_prior, InterimObservation::new(s.m_prime, s.z_m_prime)?)?;
        Ok(Self { m_prime: s.m_prime, z_prime: s.z_m_prime, budget, q: isf_unchecked(budget), target, rule })
    }

    fn c_prime(&self, n: f64) -> f64 {
        binding_critical_value(self.m_prime, n, self.z_prime, self.q)
    }

    fn pp(&self, n: f64) -> f64 {
        pp_with_rule(&self.rule, self.m_prime, n, self.z_prime, self.c_prime(n))
    }

    /// Result when the budget forces an immediate decision.
    fn immediate(&self) -> Option<RecalcResult> {
        let stop = |reject: bool| RecalcResult {
            n_prime: self.m_prime,
            c_prime: if reject { f64::NEG_INFINITY } else { f64::INFINITY },
            conditional_error_budget: self.budget,
            pp_target: self.target,
            pp_achieved: if reject { 1.0 } else { 0.0 },
            stopped_for_futility: !reject,
            max_achievable_pp: if reject { 1.0 } else { 0.0 },
        };
        if self.budget <= 0.0 {
            Some(stop(false))
        } else if self.budget >= 1.0 {
            Some(stop(true))
        } else {
            None
        }
    }

    fn result(&self, n_prime: f64, cap: f64) -> RecalcResult {
        RecalcResult {
            n_prime,
            c_prime: self.c_prime(n_prime),
            conditional_error_budget: self.budget,
            pp_target: self.target,
            pp_achieved: self.pp(n_prime),
            stopped_for_futility: false,
            max_achievable_pp: self.pp(cap),
        }
    }
}

/// Smallest final size whose predictive power under the revised prior meets
/// the original design's promise, spending exactly the conditional error.
/// If even the cap falls short the trial stops for futility.
pub fn recalc_fixed_type2(s: &RevisedScenario) -> Result<RecalcResult> {
    let r = Revision::new(s)?;
    if let Some(stop) = r.immediate() {
        return Ok(stop);
    }
    let lo = s.m_prime * (1.0 + 1e-9) + 1e-9;
    match minimal_size(|n| r.pp(n), lo, s.n_cap, r.target) {
        Some(n) => Ok(r.result(n, s.n_cap)),
        None => Ok(RecalcResult {
            n_prime: s.m_prime,
            c_prime: f64::INFINITY,
            conditional_error_budget: r.budget,
            pp_target: r.target,
            pp_achieved: 0.0,
            stopped_for_futility: true,
            max_achievable_pp: r.pp(s.n_cap),
        }),
    }
}

/// Multipliers of the pointwise problem at the planned interim analysis,
/// with the sign convention `∇f + λ_g·∇g + λ_h·∇h = 0` so that both are
/// nonnegative at a regular optimum. Here `f = n′`,
/// `g = CP₀(n′, c′) − CE` and `h = PP_target − PP_φ(n′, c′)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeMultipliers {
    pub lambda_g: f64,
    pub lambda_h: f64,
    /// `‖∇f + λ_g·∇g + λ_h·∇h‖ / ‖∇f‖`
    pub residual: f64,
    /// 2-norm condition number of the gradient matrix
    pub condition: f64,
}

pub fn lagrange_multipliers(
    d: &TwoStageDesign,
    prior_phi: &TruncatedNormalPrior,
    z_m: f64,
) -> Result<LagrangeMultipliers> {
    if !d.is_continuation(z_m) {
        return domain(format!("z_m = {z_m} lies outside the continuation region"));
    }
    let m = d.m();
    let (n0, c0) = (d.n_of(z_m), d.c_of(z_m));
    let rule = positive_posterior_rule(prior_phi, InterimObservation::new(m, z_m)?)?;
    let g = |n: f64, c: f64| cp(m, n, z_m, c, 0.0);
    let h = |n: f64, c: f64| -pp_with_rule(&rule, m, n, z_m, c);
    let (dn, dc) = (1e-3 * n0, 1e-5);
    let gn = (g(n0 + dn, c0) - g(n0 - dn, c0)) / (2.0 * dn);
    let gc = (g(n0, c0 + dc) - g(n0, c0 - dc)) / (2.0 * dc);
    let hn = (h(n0 + dn, c0) - h(n0 - dn, c0)) / (2.0 * dn);
    let hc = (h(n0, c0 + dc) - h(n0, c0 - dc)) / (2.0 * dc);
    // columns ∇g, ∇h; solve A·λ = −∇f = (−1, 0)
    let det = gn * hc - hn * gc;
    let frob2 = gn * gn + gc * gc + hn * hn + hc * hc;
    let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
    let smax = (0.5 * (frob2 + disc)).sqrt();
    let smin2 = 0.5 * (frob2 - disc);
    let condition = if smin2 > 0.0 { smax / smin2.sqrt() } else { f64::INFINITY };
    if !(condition <= 1e12) || det == 0.0 {
        return Err(Error::Singular { z_m, condition });
    }
    let lambda_g = -hc / det;
    let lambda_h = gc / det;
    let rn = 1.0 + lambda_g * gn + lambda_h * hn;
    let rc = lambda_g * gc + lambda_h * hc;
    Ok(LagrangeMultipliers { lambda_g, lambda_h, residual: rn.hypot(rc), condition })
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Final size minimising `n′ + λ_h·h_ψ(n′, c′(n′))` at the planned interim
/// analysis, with `λ_h` taken from the original design under the original
/// prior and `c′` spending exactly the conditional error.
pub fn recalc_lambda(s: &RevisedScenario) -> Result<RecalcResult> {
    let d = &s.original_design;
    if s.m_prime != d.m() {
        return domain("the multiplier scheme is defined at the planned interim size only");
    }
    let r = Revision::new(s)?;
    if let Some(stop) = r.immediate() {
        return Ok(stop);
    }
    if !d.is_continuation(s.z_m_prime) {
        return domain("interim statistic outside the continuation region");
    }
    let lambda = lagrange_multipliers(d, &s.original_prior, s.z_m_prime)?;
    let objective = |n: f64| n + lambda.lambda_h * (r.target - r.pp(n));
    let lo = s.m_prime + 1.0;
    let hi = s.n_cap;
    let steps = 400;
    let grid: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| objective(*a.1).total_cmp(&objective(*b.1)))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(steps)];
    let n_prime = golden(&objective, a, b, 1e-3);
    Ok(r.result(n_prime, s.n_cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::predictive_power;

    fn prior() -> TruncatedNormalPrior {
        TruncatedNormalPrior::new(0.4, 0.2, -0.5, 1.0).unwrap()
    }

    fn design() -> TwoStageDesign {
        TwoStageDesign::new(
            35.0,
            0.5,
            2.5,
            vec![104.0, 106.0, 100.0, 88.0, 74.0, 62.0, 55.0],
            vec![2.13, 2.12, 2.08, 2.0, 1.9, 1.8, 1.7],
        )
        .unwrap()
    }

    fn scenario(mu: f64, m_prime: f64, z: f64) -> RevisedScenario {
        RevisedScenario::new(design(), prior(), prior().shifted(mu).unwrap(), m_prime, z, 316.0).unwrap()
    }

    #[test]
    fn planned_interim_reduces_to_design() {
        let d = design();
        for z in [0.2, 0.7, 1.5, 2.4, 3.0] {
            assert_eq!(conditional_error_at(&d, 35.0, z).unwrap(), d.conditional_error(z));
        }
        let z = 1.4;
        let obs = InterimObservation::new(35.0, z).unwrap();
        let pp = predictive_power(&prior(), obs, d.n_of(z), d.c_of(z)).unwrap();
        assert!((conditional_pp_target(&d, &prior(), 35.0, z).unwrap() - pp).abs() < 1e-12);
        assert_eq!(conditional_pp_target(&d, &prior(), 35.0, 2.6).unwrap(), 1.0);
        assert_eq!(conditional_pp_target(&d, &prior(), 35.0, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn early_error_approaches_planned_error() {
        let d = design();
        for z in [0.9, 1.3, 1.8, 2.2] {
            let early = conditional_error_early(&d, 35.0 - 1e-6, z).unwrap();
            assert!((early - d.conditional_error(z)).abs() < 1e-4, "{z}");
        }
        assert!(conditional_error_early(&d, 35.0, 1.0).is_err());
        assert!(conditional_error_early(&d, 20.0, -8.0).unwrap() < 1e-6);
    }

    #[test]
    fn early_error_matches_direct_integration() {
        let d = design();
        let (mp, z): (f64, f64) = (20.0, 0.3 * 20f64.sqrt());
        let r = mp / 35.0;
        let (mean, sd) = (r.sqrt() * z, (1.0 - r).sqrt());
        let rule = crate::stats::gauss_legendre(2000, mean - 10.0 * sd, mean + 10.0 * sd).unwrap();
        let direct = rule.integrate(|x| norm_pdf((x - mean) / sd) / sd * d.conditional_error(x));
        assert!((conditional_error_early(&d, mp, z).unwrap() - direct).abs() < 1e-4);
    }

    #[test]
    fn fixed_type2_invariance_and_direction() {
        let d = design();
        for z in [0.7, 1.2, 1.775, 2.3] {
            let r = recalc_fixed_type2(&scenario(0.4, 35.0, z)).unwrap();
            assert!((r.n_prime / d.n_of(z) - 1.0).abs() < 1e-3, "z = {z}: {} vs {}", r.n_prime, d.n_of(z));
            assert!((r.c_prime - d.c_of(z)).abs() < 1e-3 * d.c_of(z).abs().max(1.0));
        }
        let z = 0.3 * 35f64.sqrt();
        let lower = recalc_fixed_type2(&scenario(0.3, 35.0, z)).unwrap();
        let higher = recalc_fixed_type2(&scenario(0.5, 35.0, z)).unwrap();
        assert!(lower.n_prime > d.n_of(z) && higher.n_prime < d.n_of(z));
        let ce = cp(35.0, lower.n_prime, z, lower.c_prime, 0.0);
        assert!(ce <= lower.conditional_error_budget + 1e-8);
        assert!(lower.pp_achieved >= lower.pp_target - 1e-6);
    }

    #[test]
    fn stopping_regions_pass_through() {
        let fut = recalc_fixed_type2(&scenario(0.3, 35.0, 0.2)).unwrap();
        assert!(fut.stopped_for_futility && fut.c_prime == f64::INFINITY);
        let eff = recalc_fixed_type2(&scenario(0.3, 35.0, 2.8)).unwrap();
        assert!(!eff.stopped_for_futility && eff.c_prime == f64::NEG_INFINITY && eff.n_prime == 35.0);
    }

    #[test]
    fn cap_binding_reports_futility() {
        let s = RevisedScenario::new(design(), prior(), prior().shifted(-0.3).unwrap(), 35.0, 0.6, 60.0).unwrap();
        let r = recalc_fixed_type2(&s).unwrap();
        assert!(r.stopped_for_futility);
        assert!(r.max_achievable_pp < r.pp_target);
    }

    #[test]
    fn multipliers_are_nonnegative_and_solve_the_system() {
        let d = design();
        for z in [0.7, 1.2, 1.775, 2.3] {
            let l = lagrange_multipliers(&d, &prior(), z).unwrap();
            assert!(l.lambda_h >= 0.0 && l.lambda_g >= 0.0, "{z}: {l:?}");
            assert!(l.residual < 1e-6);
        }
        assert!(lagrange_multipliers(&d, &prior(), 0.3).is_err());
    }

    #[test]
    fn lambda_scheme_invariance_and_direction() {
        let d = design();
        for z in [0.8, 1.775, 2.2] {
            let r = recalc_lambda(&scenario(0.4, 35.0, z)).unwrap();
            assert!((r.n_prime - d.n_of(z)).abs() < 1.0, "z = {z}: {} vs {}", r.n_prime, d.n_of(z));
        }
        let z = 0.3 * 35f64.sqrt();
        let mild = recalc_lambda(&scenario(0.35, 35.0, z)).unwrap();
        let fixed = recalc_fixed_type2(&scenario(0.35, 35.0, z)).unwrap();
        assert!(mild.n_prime > d.n_of(z));
        assert!((mild.n_prime - d.n_of(z)).abs() < (fixed.n_prime - d.n_of(z)).abs());
        assert!(recalc_lambda(&scenario(0.4, 30.0, z)).is_err());
    }

    #[test]
    fn late_interim_validation_and_limit() {
        let d = design();
        let s = RevisedScenario::new(d.clone(), prior(), prior(), 200.0, 1.0, 316.0);
        assert!(s.is_err());
        let z = 1.5;
        let late = conditional_error_at(&d, 35.0 + 1e-6, z).unwrap();
        assert!((late - d.conditional_error(z)).abs() < 1e-4);
    }
}
