//! Scalar probability kernels, Gauss-Legendre quadrature and a bracketing
//! root finder. Everything else in the crate is built on these.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Environment variable overriding the default quadrature order.
pub const QUAD_ORDER_ENV: &str = "ADAPTRIAL_QUAD_ORDER";

/// Quadrature order used for theta and z_m integrals unless overridden
/// through [`QUAD_ORDER_ENV`] (values below 8 are ignored).
pub fn default_quad_order() -> usize {
    static ORDER: OnceLock<usize> = OnceLock::new();
    *ORDER.get_or_init(|| {
        std::env::var(QUAD_ORDER_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|&k| k >= 8)
            .unwrap_or(64)
    })
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate far into the right tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF (Wichura's AS 241, about 1e-16
/// relative accuracy).
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal quantile needs 0 < p < 1, got {p}"));
    }
    Ok(quantile_unchecked(p))
}

/// Like [`norm_quantile`] but maps 0 and 1 to the infinities.
pub(crate) fn quantile_unchecked(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// `Φ⁻¹(1 - p)` computed without forming `1 - p`.
#[inline]
pub(crate) fn isf_unchecked(p: f64) -> f64 {
    -quantile_unchecked(p)
}

/// Normal distribution with location `mu` and scale `sigma` restricted to
/// `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalPrior {
    pub mu: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormalPrior {
    pub fn new(mu: f64, sigma: f64, lower: f64, upper: f64) -> Result<Self> {
        let prior = Self { mu, sigma, lower, upper };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.lower.is_finite() && self.upper.is_finite()) {
            return domain("truncated normal parameters must be finite");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return domain(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.lower >= self.upper {
            return domain(format!(
                "lower bound {} must be below upper bound {}",
                self.lower, self.upper
            ));
        }
        Ok(())
    }

    /// Member of the shifted family with the same scale and support.
    pub fn shifted(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.sigma, self.lower, self.upper)
    }

    /// Probability mass of the untruncated normal inside the bounds.
    pub fn mass(&self) -> f64 {
        let a = (self.lower - self.mu) / self.sigma;
        let b = (self.upper - self.mu) / self.sigma;
        if a > 0.0 {
            norm_sf(a) - norm_sf(b)
        } else if b < 0.0 {
            norm_cdf(b) - norm_cdf(a)
        } else {
            1.0 - norm_cdf(a) - norm_sf(b)
        }
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        if theta < self.lower || theta > self.upper {
            return 0.0;
        }
        norm_pdf((theta - self.mu) / self.sigma) / (self.sigma * self.mass())
    }

    /// The same distribution conditioned on a positive effect.
    pub fn condition_positive(&self) -> Result<Self> {
        if self.upper <= 0.0 {
            return Err(Error::Domain(format!(
                "no positive support (upper bound {}); conditioning on a positive effect is undefined",
                self.upper
            )));
        }
        Ok(Self { lower: self.lower.max(0.0), ..*self })
    }

    /// Sub-interval of the support carrying all but a negligible fraction
    /// of the mass. Quadrature is placed here so that very concentrated
    /// densities are still resolved.
    pub fn effective_support(&self) -> (f64, f64) {
        let a = self.lower.max(self.mu - 12.0 * self.sigma);
        let b = self.upper.min(self.mu + 12.0 * self.sigma);
        if a < b {
            return (a, b);
        }
        // location far outside the bounds: mass piles up at the nearer bound
        if self.mu < self.lower {
            let scale = self.sigma * self.sigma / (self.lower - self.mu);
            (self.lower, self.upper.min(self.lower + 40.0 * scale))
        } else {
            let scale = self.sigma * self.sigma / (self.mu - self.upper);
            (self.lower.max(self.upper - 40.0 * scale), self.upper)
        }
    }

    /// Quadrature nodes over the effective support with weights normalised
    /// to sum to one, i.e. a discrete stand-in for the distribution.
    pub fn rule(&self, order: usize) -> Vec<(f64, f64)> {
        let (a, b) = self.effective_support();
        let reference = reference_rule(order);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(reference.nodes.len());
        let mut exponents = Vec::with_capacity(reference.nodes.len());
        for &x in &reference.nodes {
            let theta = mid + half * x;
            let u = (theta - self.mu) / self.sigma;
            points.push((theta, 0.0));
            exponents.push(-0.5 * u * u);
        }
        let max_e = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for ((p, e), &w) in points.iter_mut().zip(&exponents).zip(&reference.weights) {
            p.1 = w * (e - max_e).exp();
            total += p.1;
        }
        for p in &mut points {
            p.1 /= total;
        }
        points
    }

    /// `E[g(Θ)]` under this distribution by quadrature.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.rule(default_quad_order())
            .into_iter()
            .map(|(t, w)| w * g(t))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|t| t)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug)]
pub(crate) struct ReferenceRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn compute_reference(order: usize) -> ReferenceRule {
    if order == 1 {
        return ReferenceRule { nodes: vec![0.0], weights: vec![2.0] };
    }
    let n = order as f64;
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(order, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(order, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    ReferenceRule { nodes, weights }
}

pub(crate) fn reference_rule(order: usize) -> Arc<ReferenceRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ReferenceRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(order.max(1))
        .or_insert_with(|| Arc::new(compute_reference(order.max(1))))
        .clone()
}

/// Gauss-Legendre rule mapped onto a finite interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if order == 0 {
        return domain("quadrature order must be at least 1");
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return domain(format!("quadrature interval [{a}, {b}] is empty or unbounded"));
    }
    let reference = reference_rule(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(QuadratureRule {
        nodes: reference.nodes.iter().map(|&x| mid + half * x).collect(),
        weights: reference.weights.iter().map(|&w| half * w).collect(),
    })
}

/// Bisection for a monotone function with a sign change on `[lo, hi]`.
///
/// Returns the midpoint of the final bracket once it is narrower than `tol`
/// or as soon as `|f| <= tol`, which also tolerates plateaus.
pub fn find_root_monotone(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo.is_nan() || f_hi.is_nan() {
        return domain(format!("function is NaN at the bracket [{lo}, {hi}]"));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let rising = f_hi > 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v.abs() <= tol {
            return Ok(mid);
        }
        if (v > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
