//! Expected-sample-size optimal two-stage designs.
//!
//! Minimises `E[n(Z_m)]` under the unconditional prior subject to a maximal
//! type-I error of `alpha` and an expected power of at least `1 − beta`.
//! The constraints enter as an exterior quadratic penalty on their relative
//! violation with an increasing weight schedule. Each weight is handled by a
//! Nelder–Mead search over the continuous parameters; an outer search runs
//! over the integer interim size. The final design is polished by a compass
//! poll and projected onto both constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{OcEvaluator, OperatingCharacteristics, TwoStageDesign};
use crate::error::{domain, Error, Result};
use crate::planners::single_stage_sample_size;
use crate::power::{positive_posterior_rule, pp_with_rule, InterimObservation};
use crate::stats::TruncatedNormalPrior;

/// Minimal width of the continuation region.
const MIN_WIDTH: f64 = 0.05;
/// Objective value for parameter vectors outside the admissible box.
const OUT_OF_BOUNDS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub pivot_count: usize,
    pub m_bounds: (u32, u32),
    pub n_bounds: (f64, f64),
    /// smallest second-stage size at the pivots
    pub min_stage_two: f64,
    pub futility_bounds: (f64, f64),
    pub efficacy_bounds: (f64, f64),
    pub penalty_weight_schedule: Vec<f64>,
    pub convergence_tol: f64,
    /// evaluation budget of a single simplex search
    pub max_evaluations: usize,
    pub seed: u64,
    pub multistarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.025,
            beta: 0.2,
            pivot_count: 7,
            m_bounds: (5, 120),
            n_bounds: (1.0, 500.0),
            min_stage_two: 10.0,
            futility_bounds: (-3.0, 3.0),
            efficacy_bounds: (0.0, 6.0),
            penalty_weight_schedule: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            convergence_tol: 1e-4,
            max_evaluations: 6000,
            seed: 20_240_607,
            multistarts: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0 && self.beta > 0.0 && self.beta < 1.0) {
            return domain("alpha and beta must lie in (0, 1)");
        }
        if self.pivot_count < 3 {
            return domain("need at least three pivots");
        }
        if !(self.m_bounds.0 >= 1 && self.m_bounds.0 <= self.m_bounds.1) {
            return domain("empty interim size range");
        }
        if !(self.n_bounds.0 < self.n_bounds.1 && self.n_bounds.1 > self.m_bounds.0 as f64) {
            return domain("empty sample size range");
        }
        if !(self.min_stage_two >= 0.0 && self.min_stage_two.is_finite()) {
            return domain("minimal second-stage size must be finite and nonnegative");
        }
        if !(self.futility_bounds.0 < self.futility_bounds.1 && self.efficacy_bounds.0 < self.efficacy_bounds.1) {
            return domain("empty boundary range");
        }
        if self.penalty_weight_schedule.is_empty()
            || self.penalty_weight_schedule.iter().any(|&w| !(w > 0.0))
            || self.penalty_weight_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return domain("penalty weights must be positive and increasing");
        }
        if !(self.convergence_tol > 0.0) || self.max_evaluations == 0 {
            return domain("convergence tolerance and evaluation budget must be positive");
        }
        if self.multistarts == 0 {
            return domain("need at least one start");
        }
        Ok(())
    }
}

/// Evidence that the returned design is a local minimum of the penalised
/// problem at the final weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PollCertificate {
    /// step length of the final, unsuccessful compass poll (scaled units)
    pub trust_radius: f64,
    /// largest objective decrease among the polled neighbours (≤ tolerance)
    pub best_neighbour_gain: f64,
    pub penalised_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalDesign {
    pub design: TwoStageDesign,
    pub characteristics: OperatingCharacteristics,
    pub min_continuation_pp: f64,
    pub certificate: PollCertificate,
    pub evaluations: usize,
}

/// Group-sequential starting point: `f = 0`, `e = 2`, flat pivots at the
/// single-stage solution and `m` a third of its sample size.
pub fn feasible_seed_design(prior: &TruncatedNormalPrior, config: &OptimizerConfig) -> Result<TwoStageDesign> {
    config.validate()?;
    let single = single_stage_sample_size(prior, config.alpha, 1.0 - config.beta)?;
    let k = config.pivot_count;
    let m = (single.n / 3.0).round().max(1.0);
    TwoStageDesign::new(m, 0.0, 2.0, vec![single.n; k], vec![single.c; k])
}

/// Unconstrained coordinates: `f`, `ln(e − f − w)`, `ln(n_i − m − s)`, `c_i`
/// with `s` the minimal second-stage size.
fn encode(d: &TwoStageDesign, m: f64, s: f64) -> Vec<f64> {
    let (f, e) = (d.futility_boundary(), d.efficacy_boundary());
    let mut x = vec![f, (e - f - MIN_WIDTH).max(1e-3).ln()];
    x.extend(d.n_pivots().iter().map(|&n| (n - m - s).max(0.5).ln()));
    x.extend_from_slice(d.c_pivots());
    x
}

fn decode(x: &[f64], m: f64, config: &OptimizerConfig) -> Option<TwoStageDesign> {
    let k = config.pivot_count;
    let f = x[0];
    let e = f + MIN_WIDTH + x[1].exp();
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    if !inside(f, config.futility_bounds) || !inside(e, config.efficacy_bounds) {
        return None;
    }
    let n: Vec<f64> = x[2..2 + k].iter().map(|y| m + config.min_stage_two + y.exp()).collect();
    if n.iter().any(|&v| !(v > m && v <= config.n_bounds.1 && v >= config.n_bounds.0)) {
        return None;
    }
    let c = x[2 + k..2 + 2 * k].to_vec();
    if c.iter().any(|v| !v.is_finite() || v.abs() > 20.0) {
        return None;
    }
    TwoStageDesign::new(m, f, e, n, c).ok()
}

struct Problem<'a> {
    evaluator: &'a OcEvaluator,
    config: &'a OptimizerConfig,
    m: f64,
}

impl Problem<'_> {
    fn violation(&self, oc: &OperatingCharacteristics) -> f64 {
        let toi = (oc.max_type_one / self.config.alpha - 1.0).max(0.0);
        let ep = (1.0 - oc.expected_power / (1.0 - self.config.beta)).max(0.0);
        toi * toi + ep * ep
    }

    fn penalised(&self, x: &[f64], weight: f64) -> f64 {
        match decode(x, self.m, self.config) {
            None => OUT_OF_BOUNDS,
            Some(d) => {
                let oc = self.evaluator.evaluate(&d);
                oc.expected_n + weight * self.violation(&oc)
            }
        }
    }
}

struct SimplexResult {
    x: Vec<f64>,
    fx: f64,
    evaluations: usize,
}

/// Nelder–Mead with dimension-adaptive coefficients.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    tol: f64,
    max_evaluations: usize,
) -> SimplexResult {
    let d = x0.len();
    let dd = d as f64;
    let (reflect, expand, contract, shrink) = (1.0, 1.0 + 2.0 / dd, 0.75 - 0.5 / dd, 1.0 - 1.0 / dd);
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evaluations = d + 1;
    let along = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect() };
    while evaluations < max_evaluations {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[d] - vals[0];
        let extent = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= tol && extent <= 1e-3 || extent <= 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / dd).collect();
        let xr = along(&centroid, &pts[d], -reflect);
        let fr = f(&xr);
        evaluations += 1;
        if fr < vals[0] {
            let xe = along(&centroid, &pts[d], -expand);
            let fe = f(&xe);
            evaluations += 1;
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
            continue;
        }
        if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[d] {
            let xc = along(&centroid, &xr, contract);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(&centroid, &pts[d], contract);
            let fc = f(&xc);
            (xc, fc)
        };
        evaluations += 1;
        if fc < vals[d].min(fr) {
            pts[d] = xc;
            vals[d] = fc;
            continue;
        }
        for i in 1..=d {
            pts[i] = along(&pts[0].clone(), &pts[i], shrink);
            vals[i] = f(&pts[i]);
        }
        evaluations += d;
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    SimplexResult { x: pts[best].clone(), fx: vals[best], evaluations }
}

fn initial_steps(dim: usize, k: usize) -> Vec<f64> {
    let mut s = vec![0.1, 0.1];
    s.extend(std::iter::repeat(0.1).take(k));
    s.extend(std::iter::repeat(0.05).take(k));
    debug_assert_eq!(s.len(), dim);
    s
}

/// Runs the penalty schedule from `x0`; each weight gets a simplex search and
/// restarts until a restart no longer improves.
fn solve_schedule(problem: &Problem, x0: &[f64], schedule: &[f64]) -> SimplexResult {
    let k = problem.config.pivot_count;
    let steps = initial_steps(x0.len(), k);
    let mut x = x0.to_vec();
    let mut fx = f64::INFINITY;
    let mut evaluations = 0;
    for &w in schedule {
        let mut obj = |p: &[f64]| problem.penalised(p, w);
        fx = obj(&x);
        for _ in 0..4 {
            let r = nelder_mead(&mut obj, &x, &steps, problem.config.convergence_tol, problem.config.max_evaluations);
            evaluations += r.evaluations;
            let gain = fx - r.fx;
            if r.fx < fx {
                x = r.x;
                fx = r.fx;
            }
            if gain <= problem.config.convergence_tol {
                break;
            }
        }
    }
    SimplexResult { x, fx, evaluations }
}

/// Compass search on the penalised objective; stops once no coordinate step
/// of the current radius gains more than the tolerance and the radius has
/// shrunk below `min_radius`.
fn compass_poll(
    problem: &Problem,
    x0: &[f64],
    weight: f64,
    min_radius: f64,
) -> (Vec<f64>, PollCertificate, usize) {
    let tol = problem.config.convergence_tol;
    let mut x = x0.to_vec();
    let mut fx = problem.penalised(&x, weight);
    let mut radius = 0.02;
    let mut evaluations = 1;
    loop {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for i in 0..x.len() {
            for sign in [-1.0, 1.0] {
                let mut p = x.clone();
                p[i] += sign * radius;
                let v = problem.penalised(&p, weight);
                evaluations += 1;
                if best.as_ref().map_or(true, |b| v < b.1) {
                    best = Some((p, v));
                }
            }
        }
        let (p, v) = best.expect("nonempty parameter vector");
        let gain = fx - v;
        if gain > tol {
            x = p;
            fx = v;
            continue;
        }
        if radius <= min_radius {
            let cert = PollCertificate { trust_radius: radius, best_neighbour_gain: gain.max(0.0), penalised_objective: fx };
            return (x, cert, evaluations);
        }
        radius *= 0.5;
    }
}

fn reparametrise(x: &[f64], from_m: f64, to_m: f64, k: usize, s: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    for v in &mut y[2..2 + k] {
        let n = from_m + s + v.exp();
        *v = (n - to_m - s).max(1.0).ln();
    }
    y
}

/// Shifts all critical values and rescales `n − m − s` so that both
/// constraints hold with equality.
fn project(evaluator: &OcEvaluator, d: &TwoStageDesign, alpha: f64, power: f64, s: f64) -> Result<TwoStageDesign> {
    let m = d.m();
    let build = |scale: f64, shift: f64| {
        TwoStageDesign::new(
            m,
            d.futility_boundary(),
            d.efficacy_boundary(),
            d.n_pivots().iter().map(|&n| m + s + scale * (n - m - s)).collect(),
            d.c_pivots().iter().map(|&c| c + shift).collect(),
        )
    };
    // critical value shift exhausting alpha for a given scale
    let shift_for = |scale: f64| -> Result<f64> {
        let toi = |s: f64| build(scale, s).map(|x| evaluator.evaluate(&x).max_type_one - alpha);
        let (mut lo, mut hi) = (-1.0, 1.0);
        while toi(lo)? < 0.0 {
            lo -= 1.0;
            if lo < -10.0 {
                return Err(Error::Infeasible("type-I error cannot reach alpha".into()));
            }
        }
        while toi(hi)? > 0.0 {
            hi += 1.0;
            if hi > 10.0 {
                return Err(Error::Infeasible("type-I error exceeds alpha at any critical value".into()));
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if toi(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    };
    let ep_gap = |scale: f64| -> Result<f64> {
        let s = shift_for(scale)?;
        Ok(evaluator.evaluate(&build(scale, s)?).expected_power - power)
    };
    let (mut lo, mut hi) = (0.9, 1.1);
    while ep_gap(lo)? > 0.0 {
        lo *= 0.9;
    }
    while ep_gap(hi)? < 0.0 {
        hi *= 1.1;
        if hi > 4.0 {
            return Err(Error::Infeasible("expected power cannot be restored by scaling".into()));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ep_gap(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    build(hi, shift_for(hi)?)
}

/// Smallest predictive power over a fine grid of the continuation region.
pub fn min_continuation_pp(d: &TwoStageDesign, prior: &TruncatedNormalPrior, points: usize) -> Result<f64> {
    let (f, e) = (d.futility_boundary(), d.efficacy_boundary());
    let mut lowest = f64::INFINITY;
    for i in 1..points {
        let z = f + (e - f) * i as f64 / points as f64;
        let rule = positive_posterior_rule(prior, InterimObservation::new(d.m(), z)?)?;
        lowest = lowest.min(pp_with_rule(&rule, d.m(), d.n_of(z), z, d.c_of(z)));
    }
    Ok(lowest)
}

struct Candidate {
    m: f64,
    x: Vec<f64>,
    fx: f64,
}

fn solve_at(
    evaluator: &OcEvaluator,
    config: &OptimizerConfig,
    m: f64,
    x0: &[f64],
    schedule: &[f64],
) -> (Candidate, usize) {
    let problem = Problem { evaluator, config, m };
    let r = solve_schedule(&problem, x0, schedule);
    (Candidate { m, x: r.x, fx: r.fx }, r.evaluations)
}

/// Optimal two-stage design; see the module documentation for the method.
pub fn optimize_two_stage(prior: &TruncatedNormalPrior, config: &OptimizerConfig) -> Result<OptimalDesign> {
    config.validate()?;
    let evaluator = OcEvaluator::new(prior)?;
    let seed = feasible_seed_design(prior, config)?;
    let k = config.pivot_count;
    let schedule = &config.penalty_weight_schedule;
    let final_weight = *schedule.last().expect("validated");
    let (m_lo, m_hi) = (config.m_bounds.0 as f64, config.m_bounds.1 as f64);
    let m0 = seed.m().clamp(m_lo, m_hi);
    let mut evaluations = 0;

    let (first, ev) = solve_at(&evaluator, config, m0, &encode(&seed, m0, config.min_stage_two), schedule);
    evaluations += ev;

    // pattern search over the interim size; neighbours are warm started from
    // the incumbent and only revisit the heaviest penalty weights
    let tail = &schedule[schedule.len().saturating_sub(2)..];
    let mut best = first;
    let mut tried = vec![m0];
    let mut stride = 8.0;
    while stride >= 1.0 {
        let neighbours: Vec<f64> = [best.m - stride, best.m + stride]
            .into_iter()
            .filter(|m| *m >= m_lo && *m <= m_hi && !tried.contains(m))
            .collect();
        tried.extend(&neighbours);
        let results: Vec<(Candidate, usize)> = neighbours
            .par_iter()
            .map(|&m| solve_at(&evaluator, config, m, &reparametrise(&best.x, best.m, m, k, config.min_stage_two), tail))
            .collect();
        let mut improved = false;
        for (c, ev) in results {
            evaluations += ev;
            if c.fx < best.fx - config.convergence_tol {
                best = c;
                improved = true;
            }
        }
        if !improved {
            stride *= 0.5;
        }
    }

    // perturbed restarts at the chosen interim size
    let scales = {
        let mut s = vec![0.3, 0.3];
        s.extend(std::iter::repeat(0.3).take(k));
        s.extend(std::iter::repeat(0.15).take(k));
        s
    };
    let starts: Vec<Vec<f64>> = (0..config.multistarts as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i);
            best.x
                .iter()
                .zip(&scales)
                .map(|(v, s)| v + s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let restarts: Vec<(Candidate, usize)> = starts
        .par_iter()
        .map(|x0| solve_at(&evaluator, config, best.m, x0, &schedule[schedule.len().saturating_sub(3)..]))
        .collect();
    for (c, ev) in restarts {
        evaluations += ev;
        if c.fx < best.fx {
            best = c;
        }
    }

    let problem = Problem { evaluator: &evaluator, config, m: best.m };
    let (x, certificate, ev) = compass_poll(&problem, &best.x, final_weight, 1e-4);
    evaluations += ev;
    let polished = decode(&x, best.m, config)
        .ok_or_else(|| Error::Infeasible("optimum left the admissible box".into()))?;
    let design = project(&evaluator, &polished, config.alpha, 1.0 - config.beta, config.min_stage_two)?;
    let characteristics = evaluator.evaluate(&design);
    if characteristics.max_type_one > config.alpha + 1e-4 || characteristics.expected_power < 1.0 - config.beta - 1e-3 {
        return Err(Error::Infeasible("no design meets both constraints within the bounds".into()));
    }
    Ok(OptimalDesign {
        min_continuation_pp: min_continuation_pp(&design, prior, 400)?,
        design,
        characteristics,
        certificate,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::two_stage_oc;

    fn prior() -> TruncatedNormalPrior {
        TruncatedNormalPrior::new(0.4, 0.2, -0.5, 1.0).unwrap()
    }

    #[test]
    fn seed_design_construction() {
        let d = feasible_seed_design(&prior(), &OptimizerConfig::default()).unwrap();
        assert_eq!(d.m(), 26.0);
        assert_eq!((d.futility_boundary(), d.efficacy_boundary()), (0.0, 2.0));
        assert!(d.n_pivots().iter().all(|&n| n == 79.0));
        assert!(d.c_pivots().iter().all(|&c| (c - 1.959964).abs() < 1e-6));
        let oc = two_stage_oc(&d, &prior()).unwrap();
        assert!(oc.expected_power >= 0.78);
        // bivariate normal probability of rejecting with an early efficacy stop at 2
        assert!((oc.max_type_one - 0.040_961_534).abs() < 1e-8);
    }

    #[test]
    fn encode_decode_round_trip() {
        let cfg = OptimizerConfig::default();
        let d = feasible_seed_design(&prior(), &cfg).unwrap();
        let back = decode(&encode(&d, 26.0, cfg.min_stage_two), 26.0, &cfg).unwrap();
        for (a, b) in back.n_pivots().iter().zip(d.n_pivots()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((back.efficacy_boundary() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nelder_mead_minimises_rosenbrock() {
        let mut calls = 0;
        let mut f = |x: &[f64]| {
            calls += 1;
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let r = nelder_mead(&mut f, &[-1.2, 1.0], &[0.1, 0.1], 1e-14, 5000);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        c.pivot_count = 2;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.penalty_weight_schedule = vec![10.0, 1.0];
        assert!(c.validate().is_err());
    }
}
