//! Single- and two-stage designs and their unconditional operating
//! characteristics.
//!
//! A two-stage design stops for futility at `z_m ≤ f` (`n = m`, `c = +∞`),
//! for efficacy at `z_m ≥ e` (`n = m`, `c = −∞`) and otherwise continues to
//! `n(z_m)` subjects with critical value `c(z_m)`. Both functions are natural
//! cubic splines through pivots at the Chebyshev abscissae of `[f, e]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::power::{cp, expected_power};
use crate::spline::NaturalSpline;
use crate::stats::{default_quad_order, norm_pdf, norm_sf, reference_rule, TruncatedNormalPrior};

/// Smallest continuation sample size accepted by the interpolant, relative to
/// `m`; keeps the information fraction strictly below one.
const MIN_EXCESS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleStageDesign {
    pub n: f64,
    pub c: f64,
}

impl SingleStageDesign {
    pub fn new(n: f64, c: f64) -> Result<Self> {
        if !(n >= 1.0 && n.is_finite()) {
            return domain(format!("sample size must be at least 1, got {n}"));
        }
        if !c.is_finite() {
            return domain("critical value must be finite");
        }
        Ok(Self { n, c })
    }
}

/// Serialised form of a two-stage design: the pivots fully determine it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageParams {
    pub m: f64,
    pub futility_boundary: f64,
    pub efficacy_boundary: f64,
    pub n_pivots: Vec<f64>,
    pub c_pivots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TwoStageParams", into = "TwoStageParams")]
pub struct TwoStageDesign {
    params: TwoStageParams,
    n_spline: NaturalSpline,
    c_spline: NaturalSpline,
}

/// Chebyshev nodes of the first kind mapped to `[a, b]`, ascending.
pub fn chebyshev_abscissae(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let u = ((2 * i + 1) as f64 * PI / (2 * k) as f64).cos();
            0.5 * (a + b) - 0.5 * (b - a) * u
        })
        .collect()
}

impl TryFrom<TwoStageParams> for TwoStageDesign {
    type Error = crate::error::Error;

    fn try_from(p: TwoStageParams) -> Result<Self> {
        let k = p.n_pivots.len();
        if !(p.m >= 1.0 && p.m.is_finite()) {
            return domain(format!("interim size must be at least 1, got {}", p.m));
        }
        if !(p.futility_boundary.is_finite() && p.efficacy_boundary.is_finite()) {
            return domain("stopping boundaries must be finite");
        }
        if p.futility_boundary >= p.efficacy_boundary {
            return domain(format!(
                "futility boundary {} must lie below efficacy boundary {}",
                p.futility_boundary, p.efficacy_boundary
            ));
        }
        if k < 2 || p.c_pivots.len() != k {
            return domain("need at least two pivots and equally many n and c values");
        }
        if p.n_pivots.iter().any(|&n| !(n > p.m && n.is_finite())) {
            return domain("every n pivot must be finite and exceed m");
        }
        if p.c_pivots.iter().any(|c| !c.is_finite()) {
            return domain("every c pivot must be finite");
        }
        let x = chebyshev_abscissae(p.futility_boundary, p.efficacy_boundary, k);
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("stopping boundaries too close for the pivot count");
        }
        let n_spline = NaturalSpline::new(x.clone(), p.n_pivots.clone());
        let c_spline = NaturalSpline::new(x, p.c_pivots.clone());
        Ok(Self { params: p, n_spline, c_spline })
    }
}

impl From<TwoStageDesign> for TwoStageParams {
    fn from(d: TwoStageDesign) -> Self {
        d.params
    }
}

/// One continuation-region quadrature node with the design evaluated there.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ContinuationNode {
    pub z: f64,
    pub w: f64,
    pub n: f64,
    pub c: f64,
    /// standardised conditional-error quantile `(c − √τ·z)/√(1−τ)`
    pub q: f64,
    /// `√(n − m)`, so that conditional power at θ is `Φ̄(q − θ·s)`
    pub s: f64,
}

impl TwoStageDesign {
    pub fn new(m: f64, f: f64, e: f64, n_pivots: Vec<f64>, c_pivots: Vec<f64>) -> Result<Self> {
        Self::try_from(TwoStageParams {
            m,
            futility_boundary: f,
            efficacy_boundary: e,
            n_pivots,
            c_pivots,
        })
    }

    pub fn params(&self) -> &TwoStageParams {
        &self.params
    }
    pub fn m(&self) -> f64 {
        self.params.m
    }
    pub fn futility_boundary(&self) -> f64 {
        self.params.futility_boundary
    }
    pub fn efficacy_boundary(&self) -> f64 {
        self.params.efficacy_boundary
    }
    pub fn n_pivots(&self) -> &[f64] {
        &self.params.n_pivots
    }
    pub fn c_pivots(&self) -> &[f64] {
        &self.params.c_pivots
    }
    pub fn pivot_abscissae(&self) -> &[f64] {
        self.n_spline.knots()
    }

    pub fn is_continuation(&self, z_m: f64) -> bool {
        z_m > self.params.futility_boundary && z_m < self.params.efficacy_boundary
    }

    /// Final sample size; `m` in both stopping regions.
    pub fn n_of(&self, z_m: f64) -> f64 {
        if !self.is_continuation(z_m) {
            return self.params.m;
        }
        let m = self.params.m;
        self.n_spline.eval(z_m).max(m * (1.0 + MIN_EXCESS) + MIN_EXCESS)
    }

    /// Final critical value; `+∞` after a futility stop, `−∞` after an
    /// efficacy stop.
    pub fn c_of(&self, z_m: f64) -> f64 {
        if z_m <= self.params.futility_boundary {
            f64::INFINITY
        } else if z_m >= self.params.efficacy_boundary {
            f64::NEG_INFINITY
        } else {
            self.c_spline.eval(z_m)
        }
    }

    /// Conditional type-I error given the interim statistic.
    pub fn conditional_error(&self, z_m: f64) -> f64 {
        if z_m <= self.params.futility_boundary {
            0.0
        } else if z_m >= self.params.efficacy_boundary {
            1.0
        } else {
            cp(self.params.m, self.n_of(z_m), z_m, self.c_of(z_m), 0.0)
        }
    }

    /// Conditional power at effect `theta` given the interim statistic.
    pub fn conditional_power(&self, z_m: f64, theta: f64) -> f64 {
        if !self.is_continuation(z_m) {
            return self.conditional_error(z_m);
        }
        cp(self.params.m, self.n_of(z_m), z_m, self.c_of(z_m), theta)
    }

    /// Composite Gauss–Legendre nodes on the continuation region clipped to
    /// `[lo, hi]`. Panels break at the pivots and are at most `max_width` wide.
    pub(crate) fn continuation_nodes(&self, lo: f64, hi: f64, per_panel: usize, max_width: f64) -> Vec<ContinuationNode> {
        let a = self.params.futility_boundary.max(lo);
        let b = self.params.efficacy_boundary.min(hi);
        if a >= b {
            return Vec::new();
        }
        let mut breaks = vec![a];
        breaks.extend(self.pivot_abscissae().iter().copied().filter(|&x| x > a && x < b));
        breaks.push(b);
        let reference = reference_rule(per_panel);
        let m = self.params.m;
        let mut nodes = Vec::new();
        for w in breaks.windows(2) {
            let pieces = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
            let width = (w[1] - w[0]) / pieces as f64;
            for p in 0..pieces {
                let left = w[0] + p as f64 * width;
                let half = 0.5 * width;
                for (x, wt) in reference.nodes.iter().zip(&reference.weights) {
                    let z = left + half * (x + 1.0);
                    let n = self.n_of(z);
                    let c = self.c_of(z);
                    let tau = m / n;
                    nodes.push(ContinuationNode {
                        z,
                        w: half * wt,
                        n,
                        c,
                        q: (c - tau.sqrt() * z) / (1.0 - tau).sqrt(),
                        s: (n - m).sqrt(),
                    });
                }
            }
        }
        nodes
    }
}

/// Integration range for the interim statistic, wide enough for every
/// effect in the prior's support.
pub fn z_domain(prior: &TruncatedNormalPrior, m: f64) -> (f64, f64) {
    let sm = m.sqrt();
    ((sm * prior.lower - 8.0).min(-8.0), (sm * prior.upper + 8.0).max(8.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub max_type_one: f64,
    pub expected_power: f64,
    pub expected_n: f64,
    pub sd_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    SingleStage(SingleStageDesign),
    TwoStage(TwoStageDesign),
}

impl Design {
    pub fn operating_characteristics(&self, prior: &TruncatedNormalPrior) -> Result<OperatingCharacteristics> {
        match self {
            Design::SingleStage(d) => single_stage_oc(d, prior),
            Design::TwoStage(d) => two_stage_oc(d, prior),
        }
    }
}

pub fn single_stage_oc(d: &SingleStageDesign, prior: &TruncatedNormalPrior) -> Result<OperatingCharacteristics> {
    Ok(OperatingCharacteristics {
        max_type_one: norm_sf(d.c),
        expected_power: expected_power(prior, d.n, d.c)?,
        expected_n: d.n,
        sd_n: 0.0,
    })
}

/// Precomputed effect rules, reused across many design evaluations.
#[derive(Debug, Clone)]
pub(crate) struct OcEvaluator {
    prior: TruncatedNormalPrior,
    positive: Vec<(f64, f64)>,
    unconditional: Vec<(f64, f64)>,
    per_panel: usize,
}

impl OcEvaluator {
    pub(crate) fn new(prior: &TruncatedNormalPrior) -> Result<Self> {
        prior.validate()?;
        let order = default_quad_order();
        Ok(Self {
            prior: *prior,
            positive: prior.condition_positive()?.rule(order),
            unconditional: prior.rule(order),
            per_panel: (order / 8).max(4),
        })
    }

    pub(crate) fn evaluate(&self, d: &TwoStageDesign) -> OperatingCharacteristics {
        let m = d.m();
        let sm = m.sqrt();
        let e = d.efficacy_boundary();
        let (lo, hi) = z_domain(&self.prior, m);
        let nodes = d.continuation_nodes(lo, hi, self.per_panel, 0.5);

        let max_type_one = norm_sf(e) + nodes.iter().map(|k| k.w * norm_pdf(k.z) * norm_sf(k.q)).sum::<f64>();

        let mut expected_power = 0.0;
        for &(t, wt) in &self.positive {
            let cont: f64 = nodes
                .iter()
                .map(|k| k.w * norm_pdf(k.z - sm * t) * norm_sf(k.q - t * k.s))
                .sum();
            expected_power += wt * (norm_sf(e - sm * t) + cont);
        }

        let (mut en, mut en2) = (m, m * m);
        for k in &nodes {
            let density: f64 = self
                .unconditional
                .iter()
                .map(|&(t, wt)| wt * norm_pdf(k.z - sm * t))
                .sum();
            en += k.w * density * (k.n - m);
            en2 += k.w * density * (k.n * k.n - m * m);
        }
        OperatingCharacteristics {
            max_type_one: max_type_one.clamp(0.0, 1.0),
            expected_power: expected_power.clamp(0.0, 1.0),
            expected_n: en,
            sd_n: (en2 - en * en).max(0.0).sqrt(),
        }
    }
}

pub fn two_stage_oc(d: &TwoStageDesign, prior: &TruncatedNormalPrior) -> Result<OperatingCharacteristics> {
    Ok(OcEvaluator::new(prior)?.evaluate(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::gauss_legendre;

    fn prior() -> TruncatedNormalPrior {
        TruncatedNormalPrior::new(0.4, 0.2, -0.5, 1.0).unwrap()
    }

    fn sample_design() -> TwoStageDesign {
        TwoStageDesign::new(
            30.0,
            0.5,
            2.6,
            vec![90.0, 100.0, 95.0, 80.0, 65.0, 52.0, 45.0],
            vec![2.2, 2.0, 1.8, 1.5, 1.2, 0.9, 0.6],
        )
        .unwrap()
    }

    #[test]
    fn chebyshev_nodes_examples() {
        let x = chebyshev_abscissae(-1.0, 1.0, 2);
        assert!((x[0] + 0.5f64.sqrt()).abs() < 1e-15 && (x[1] - 0.5f64.sqrt()).abs() < 1e-15);
        let x = chebyshev_abscissae(0.0, 2.0, 3);
        assert!((x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn regions_and_pivots() {
        let d = sample_design();
        assert_eq!(d.n_of(-0.5), 30.0);
        assert_eq!(d.n_of(3.0), 30.0);
        assert_eq!(d.c_of(0.4), f64::INFINITY);
        assert_eq!(d.c_of(2.7), f64::NEG_INFINITY);
        for (i, &x) in d.pivot_abscissae().iter().enumerate() {
            assert!((d.n_of(x) - d.n_pivots()[i]).abs() < 1e-12);
            assert!((d.c_of(x) - d.c_pivots()[i]).abs() < 1e-12);
        }
        assert_eq!(d.conditional_error(0.5), 0.0);
        assert_eq!(d.conditional_error(2.6), 1.0);
        let z = 1.3;
        let direct = crate::power::conditional_power(30.0, d.n_of(z), z, d.c_of(z), 0.0).unwrap();
        assert_eq!(d.conditional_error(z), direct);
    }

    #[test]
    fn invalid_designs_rejected() {
        assert!(TwoStageDesign::new(30.0, 1.0, 1.0, vec![40.0; 3], vec![1.0; 3]).is_err());
        assert!(TwoStageDesign::new(30.0, 0.0, 1.0, vec![40.0, 20.0, 40.0], vec![1.0; 3]).is_err());
        assert!(TwoStageDesign::new(30.0, 0.0, 1.0, vec![40.0; 3], vec![1.0, f64::NAN, 1.0]).is_err());
        assert!(TwoStageDesign::new(0.5, 0.0, 1.0, vec![40.0; 3], vec![1.0; 3]).is_err());
        assert!(SingleStageDesign::new(0.0, 1.96).is_err());
    }

    #[test]
    fn serde_round_trip_keeps_pivots() {
        let d = sample_design();
        let p: TwoStageParams = d.clone().into();
        let back = TwoStageDesign::try_from(p).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn single_stage_characteristics() {
        let oc = single_stage_oc(&SingleStageDesign::new(79.0, 1.959964).unwrap(), &prior()).unwrap();
        assert!((oc.max_type_one - 0.025).abs() < 1e-7);
        assert!(oc.expected_power >= 0.8);
        assert_eq!(oc.expected_n, 79.0);
        assert_eq!(oc.sd_n, 0.0);
    }

    #[test]
    fn two_stage_oc_matches_brute_force_integration() {
        // plain high-order integration over z and θ without the stop-region shortcuts
        let d = sample_design();
        let pr = prior();
        let oc = two_stage_oc(&d, &pr).unwrap();
        let tr = gauss_legendre(200, 0.0, 1.0).unwrap();
        let pos = pr.condition_positive().unwrap();
        // brute force integrand is discontinuous at f and e; split there
        let split = |g: &dyn Fn(f64) -> f64| {
            let a = gauss_legendre(400, -10.0, 0.5).unwrap().integrate(g);
            let b = gauss_legendre(400, 0.5, 2.6).unwrap().integrate(g);
            let c = gauss_legendre(400, 2.6, 15.0).unwrap().integrate(g);
            a + b + c
        };
        let toi_split = split(&|z| norm_pdf(z) * d.conditional_error(z));
        assert!((oc.max_type_one - toi_split).abs() < 1e-9);
        let ep = tr.integrate(|t| {
            pos.pdf(t) * split(&|z| norm_pdf(z - 30f64.sqrt() * t) * d.conditional_power(z, t))
        });
        assert!((oc.expected_power - ep).abs() < 1e-7, "{} {}", oc.expected_power, ep);
        let tr_all = gauss_legendre(200, -0.5, 1.0).unwrap();
        let dens = |z: f64| tr_all.integrate(|t| pr.pdf(t) * norm_pdf(z - 30f64.sqrt() * t));
        let en = split(&|z| dens(z) * d.n_of(z));
        let en2 = split(&|z| dens(z) * d.n_of(z).powi(2));
        assert!((oc.expected_n - en).abs() < 1e-6);
        assert!((oc.sd_n - (en2 - en * en).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn constant_pivots_reduce_to_group_sequential_quantities() {
        // flat n and c: the design is a classical two-stage group sequential test
        let d = TwoStageDesign::new(26.0, -50.0, 50.0, vec![79.0; 5], vec![1.96; 5]).unwrap();
        let oc = two_stage_oc(&d, &prior()).unwrap();
        assert!((oc.max_type_one - norm_sf(1.96)).abs() < 1e-10);
        assert!((oc.expected_n - 79.0).abs() < 1e-9);
        assert!(oc.sd_n < 1e-4);
        let ep = expected_power(&prior(), 79.0, 1.96).unwrap();
        assert!((oc.expected_power - ep).abs() < 1e-9);
    }
}
