//! Monte Carlo simulation of designs and of the interim power estimators.
//!
//! Replicates are split into fixed-size blocks; block `i` draws from a
//! ChaCha8 generator seeded with `seed` on stream `i`, and block aggregates
//! are merged in block order, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Design, SingleStageDesign, TwoStageDesign};
use crate::error::{domain, Result};
use crate::power::{cp, positive_posterior_rule, pp_with_rule, InterimObservation};
use crate::stats::{norm_cdf, quantile_unchecked, TruncatedNormalPrior};

const BLOCK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffectModel {
    Fixed(f64),
    Prior(TruncatedNormalPrior),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replicates: u64,
    pub seed: u64,
    pub effect: EffectModel,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return domain("need at least one replicate");
        }
        if let EffectModel::Prior(p) = &self.effect {
            p.validate()?;
        }
        Ok(())
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `x`.
    pub fn z_score(&self, x: f64) -> f64 {
        if self.se == 0.0 {
            if self.value == x { 0.0 } else { f64::INFINITY }
        } else {
            (self.value - x) / self.se
        }
    }
}

/// Simulated operating characteristics. With a fixed effect the rejection
/// rate is the power at that effect (the type-I error at zero); with a prior
/// it is the expected power over replicates with a nonnegative effect, while
/// the sample size moments use every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCharacteristics {
    pub rejection_rate: Estimate,
    pub expected_n: Estimate,
    pub sd_n: Estimate,
    pub replicates: u64,
    pub power_replicates: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    count: u64,
    power_count: u64,
    rejections: u64,
    // powers of n − shift
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Tally {
    fn add(&mut self, other: &Tally) {
        self.count += other.count;
        self.power_count += other.power_count;
        self.rejections += other.rejections;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.s3 += other.s3;
        self.s4 += other.s4;
    }
}

pub(crate) fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Inverse-CDF draw from a truncated normal.
pub fn sample_truncated(prior: &TruncatedNormalPrior, rng: &mut impl Rng) -> f64 {
    let a = norm_cdf((prior.lower - prior.mu) / prior.sigma);
    let b = norm_cdf((prior.upper - prior.mu) / prior.sigma);
    let u: f64 = rng.random();
    let t = prior.mu + prior.sigma * quantile_unchecked(a + u * (b - a));
    t.clamp(prior.lower, prior.upper)
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One trial: returns (final size, rejected).
fn run_trial(design: &Design, theta: f64, rng: &mut ChaCha8Rng) -> (f64, bool) {
    match design {
        Design::SingleStage(SingleStageDesign { n, c }) => {
            let z = n.sqrt() * theta + normal(rng);
            (*n, z > *c)
        }
        Design::TwoStage(d) => run_two_stage(d, theta, rng),
    }
}

fn run_two_stage(d: &TwoStageDesign, theta: f64, rng: &mut ChaCha8Rng) -> (f64, bool) {
    let m = d.m();
    let z_m = m.sqrt() * theta + normal(rng);
    if z_m <= d.futility_boundary() {
        return (m, false);
    }
    if z_m >= d.efficacy_boundary() {
        return (m, true);
    }
    let n = d.n_of(z_m);
    let c = d.c_of(z_m);
    // standardised sum of the second-stage observations
    let y = (n - m).sqrt() * theta + normal(rng);
    let z_n = (m.sqrt() * z_m + (n - m).sqrt() * y) / n.sqrt();
    (n, z_n > c)
}

fn rate(successes: u64, count: u64) -> Estimate {
    if count == 0 {
        return Estimate { value: f64::NAN, se: f64::NAN };
    }
    let p = successes as f64 / count as f64;
    Estimate { value: p, se: (p * (1.0 - p) / count as f64).sqrt() }
}

/// Simulates a design under a fixed effect or under a prior.
pub fn simulate(design: &Design, config: &SimConfig) -> Result<SimulatedCharacteristics> {
    config.validate()?;
    let shift = match design {
        Design::SingleStage(d) => d.n,
        Design::TwoStage(d) => d.m(),
    };
    let blocks = config.replicates.div_ceil(BLOCK);
    let tallies: Vec<Tally> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(config.seed, b);
            let size = BLOCK.min(config.replicates - b * BLOCK);
            let mut t = Tally::default();
            for _ in 0..size {
                let theta = match &config.effect {
                    EffectModel::Fixed(th) => *th,
                    EffectModel::Prior(p) => sample_truncated(p, &mut rng),
                };
                let (n, reject) = run_trial(design, theta, &mut rng);
                t.count += 1;
                let counts_for_power = match config.effect {
                    EffectModel::Fixed(_) => true,
                    EffectModel::Prior(_) => theta >= 0.0,
                };
                if counts_for_power {
                    t.power_count += 1;
                    t.rejections += reject as u64;
                }
                let d = n - shift;
                let d2 = d * d;
                t.s1 += d;
                t.s2 += d2;
                t.s3 += d2 * d;
                t.s4 += d2 * d2;
            }
            t
        })
        .collect();
    let mut total = Tally::default();
    for t in &tallies {
        total.add(t);
    }
    let count = total.count as f64;
    let mean = total.s1 / count;
    let e2 = total.s2 / count;
    let e3 = total.s3 / count;
    let e4 = total.s4 / count;
    let var = (e2 - mean * mean).max(0.0);
    let m4 = (e4 - 4.0 * mean * e3 + 6.0 * mean * mean * e2 - 3.0 * mean.powi(4)).max(0.0);
    let sd = var.sqrt();
    let sd_se = if var > 0.0 { ((m4 - var * var).max(0.0) / (4.0 * var * count)).sqrt() } else { 0.0 };
    Ok(SimulatedCharacteristics {
        rejection_rate: rate(total.rejections, total.power_count),
        expected_n: Estimate { value: shift + mean, se: (var / count).sqrt() },
        sd_n: Estimate { value: sd, se: sd_se },
        replicates: total.count,
        power_replicates: total.power_count,
    })
}

/// Convenience wrapper for two-stage designs.
pub fn simulate_two_stage(design: &TwoStageDesign, config: &SimConfig) -> Result<SimulatedCharacteristics> {
    simulate(&Design::TwoStage(design.clone()), config)
}

/// Sampling error of one interim power estimator against the true
/// conditional power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorError {
    pub bias: Estimate,
    pub mae: Estimate,
    pub mse: Estimate,
    /// standard deviation of the estimator itself
    pub sd: f64,
    pub skewness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStudy {
    pub acp: EstimatorError,
    pub ocp: EstimatorError,
    pub pp: EstimatorError,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    // error e = estimate − truth
    e: f64,
    e2: f64,
    abs: f64,
    abs2: f64,
    e4: f64,
    // estimate x
    x: f64,
    x2: f64,
    x3: f64,
}

impl Moments {
    fn push(&mut self, est: f64, truth: f64) {
        let e = est - truth;
        self.e += e;
        self.e2 += e * e;
        self.abs += e.abs();
        self.abs2 += e * e;
        self.e4 += e * e * e * e;
        self.x += est;
        self.x2 += est * est;
        self.x3 += est * est * est;
    }

    fn add(&mut self, o: &Moments) {
        self.e += o.e;
        self.e2 += o.e2;
        self.abs += o.abs;
        self.abs2 += o.abs2;
        self.e4 += o.e4;
        self.x += o.x;
        self.x2 += o.x2;
        self.x3 += o.x3;
    }

    fn finish(&self, n: f64) -> EstimatorError {
        let mean_e = self.e / n;
        let mse = self.e2 / n;
        let mae = self.abs / n;
        let mean_x = self.x / n;
        let var_x = (self.x2 / n - mean_x * mean_x).max(0.0);
        let third = self.x3 / n - 3.0 * mean_x * self.x2 / n + 2.0 * mean_x.powi(3);
        EstimatorError {
            bias: Estimate { value: mean_e, se: ((mse - mean_e * mean_e).max(0.0) / n).sqrt() },
            mae: Estimate { value: mae, se: ((self.abs2 / n - mae * mae).max(0.0) / n).sqrt() },
            mse: Estimate { value: mse, se: ((self.e4 / n - mse * mse).max(0.0) / n).sqrt() },
            sd: var_x.sqrt(),
            skewness: if var_x > 0.0 { third / var_x.powf(1.5) } else { 0.0 },
        }
    }
}

/// Bias, MAE and MSE of assumed, observed and predictive power as
/// estimators of the conditional power at the true effect `theta`.
pub fn estimator_sampling_stats(
    theta: f64,
    m: f64,
    n: f64,
    c: f64,
    prior: &TruncatedNormalPrior,
    theta1: f64,
    config: &SimConfig,
) -> Result<EstimatorStudy> {
    if config.replicates == 0 {
        return domain("need at least one replicate");
    }
    if !(m >= 1.0 && n > m) {
        return domain("need 1 <= m < n");
    }
    let blocks = config.replicates.div_ceil(BLOCK);
    let parts: Vec<Result<[Moments; 3]>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(config.seed, b);
            let size = BLOCK.min(config.replicates - b * BLOCK);
            let mut acc = [Moments::default(); 3];
            for _ in 0..size {
                let z = m.sqrt() * theta + normal(&mut rng);
                let truth = cp(m, n, z, c, theta);
                let rule = positive_posterior_rule(prior, InterimObservation::new(m, z)?)?;
                acc[0].push(cp(m, n, z, c, theta1), truth);
                acc[1].push(cp(m, n, z, c, z / m.sqrt()), truth);
                acc[2].push(pp_with_rule(&rule, m, n, z, c), truth);
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Moments::default(); 3];
    for p in parts {
        let p = p?;
        for i in 0..3 {
            total[i].add(&p[i]);
        }
    }
    let count = config.replicates as f64;
    Ok(EstimatorStudy { acp: total[0].finish(count), ocp: total[1].finish(count), pp: total[2].finish(count) })
}
