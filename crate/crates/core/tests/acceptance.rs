//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use adaptrial::design::{two_stage_oc, Design, OperatingCharacteristics, SingleStageDesign, TwoStageDesign};
use adaptrial::mc::{estimator_sampling_stats, simulate, EffectModel, SimConfig};
use adaptrial::optimal::{optimize_two_stage, OptimalDesign, OptimizerConfig};
use adaptrial::planners::{naive_adaptive_design, naive_recalc_pointwise, single_stage_sample_size, NaiveRecalcPolicy};
use adaptrial::power::{assumed_cp, predictive_power};
use adaptrial::recalc::{conditional_error_early, default_n_cap, recalc_fixed_type2, recalc_lambda, RevisedScenario};
use adaptrial::{InterimObservation, TruncatedNormalPrior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn prior() -> TruncatedNormalPrior {
    TruncatedNormalPrior::new(0.4, 0.2, -0.5, 1.0).unwrap()
}

fn within(name: &str, value: f64, lo: f64, hi: f64, notes: &mut Vec<String>, ok: &mut bool) {
    let pass = value >= lo && value <= hi;
    *ok &= pass;
    notes.push(format!("{name}={value:.4}{}[{lo:.4},{hi:.4}]", if pass { "∈" } else { "∉" }));
}

fn verdict(ok: bool, notes: Vec<String>) -> Check {
    let text = notes.join(" ");
    if ok { Ok(text) } else { Err(text) }
}

fn budget(ok: &mut bool, notes: &mut Vec<String>, elapsed: Duration, limit: Duration) {
    if elapsed > limit {
        *ok = false;
        notes.push(format!("runtime {:.1}s over {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
    }
}

fn base_design() -> SingleStageDesign {
    single_stage_sample_size(&prior(), 0.025, 0.8).unwrap()
}

fn naive_policy() -> NaiveRecalcPolicy {
    NaiveRecalcPolicy::new(0.2, 30.0, 160.0, prior(), base_design(), 26.0).unwrap()
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let d = single_stage_sample_size(&prior(), 0.025, 0.8).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let mut ok = d.n == 79.0;
    let mut notes = vec![format!("n={} c={:.6}", d.n, d.c)];
    budget(&mut ok, &mut notes, elapsed, Duration::from_secs(1));
    verdict(ok, notes)
}

fn criterion_2(naive: &TwoStageDesign, elapsed: Duration) -> Check {
    let oc = two_stage_oc(naive, &prior()).map_err(|e| e.to_string())?;
    let (mut ok, mut notes) = (true, vec![]);
    within("E[n]", oc.expected_n, 48.5, 50.5, &mut notes, &mut ok);
    within("SD[n]", oc.sd_n, 28.7, 30.7, &mut notes, &mut ok);
    within("EP", oc.expected_power, 0.711, 0.731, &mut notes, &mut ok);
    within("maxTOI", oc.max_type_one, 0.019, 0.023, &mut notes, &mut ok);
    budget(&mut ok, &mut notes, elapsed, Duration::from_secs(30));
    verdict(ok, notes)
}

fn criterion_3(opt: &OptimalDesign, elapsed: Duration) -> Check {
    let oc = opt.characteristics;
    let (mut ok, mut notes) = (true, vec![]);
    within("E[n]", oc.expected_n, 54.9, 57.9, &mut notes, &mut ok);
    within("SD[n]", oc.sd_n, 26.5, 30.5, &mut notes, &mut ok);
    within("m", opt.design.m(), 32.0, 38.0, &mut notes, &mut ok);
    within("maxTOI", oc.max_type_one, 0.0245, 0.0251, &mut notes, &mut ok);
    within("EP", oc.expected_power, 0.799, 0.805, &mut notes, &mut ok);
    within("minPP", opt.min_continuation_pp, 0.35, 0.45, &mut notes, &mut ok);
    budget(&mut ok, &mut notes, elapsed, Duration::from_secs(600));
    verdict(ok, notes)
}

fn interior_grid(d: &TwoStageDesign, points: usize) -> Vec<f64> {
    let (f, e) = (d.futility_boundary(), d.efficacy_boundary());
    (0..points).map(|i| f + (e - f) * (i as f64 + 0.5) / points as f64).collect()
}

fn scenario(d: &TwoStageDesign, mu: f64, z: f64) -> RevisedScenario {
    let cap = default_n_cap(&prior(), 0.025, 0.2).unwrap();
    RevisedScenario::new(d.clone(), prior(), prior().shifted(mu).unwrap(), d.m(), z, cap).unwrap()
}

fn criterion_4(d: &TwoStageDesign) -> Check {
    let t = Instant::now();
    let (mut worst_n, mut worst_c, mut worst_lambda) = (0.0f64, 0.0f64, 0.0f64);
    for z in interior_grid(d, 21) {
        let s = scenario(d, 0.4, z);
        let r = recalc_fixed_type2(&s).map_err(|e| e.to_string())?;
        worst_n = worst_n.max((r.n_prime / d.n_of(z) - 1.0).abs());
        worst_c = worst_c.max((r.c_prime / d.c_of(z) - 1.0).abs());
        let l = recalc_lambda(&s).map_err(|e| format!("z={z:.3}: {e}"))?;
        worst_lambda = worst_lambda.max((l.n_prime - d.n_of(z)).abs());
    }
    let mut ok = worst_n <= 1e-3 && worst_c <= 1e-3 && worst_lambda <= 1.0;
    let mut notes = vec![format!(
        "max rel dev n={worst_n:.2e} c={worst_c:.2e}; lambda max |dn|={worst_lambda:.3}"
    )];
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(60));
    verdict(ok, notes)
}

fn criterion_5(d: &TwoStageDesign) -> Check {
    let t = Instant::now();
    let z = 0.3 * d.m().sqrt();
    let mut sizes = vec![];
    for mu in [0.2, 0.3, 0.4, 0.5, 0.6] {
        sizes.push(recalc_fixed_type2(&scenario(d, mu, z)).map_err(|e| e.to_string())?.n_prime);
    }
    let decreasing = sizes.windows(2).all(|w| w[1] < w[0]);
    let n0 = d.n_of(z);
    let up = recalc_lambda(&scenario(d, 0.35, z)).map_err(|e| e.to_string())?.n_prime - n0;
    let down = recalc_lambda(&scenario(d, 0.1, z)).map_err(|e| e.to_string())?.n_prime - n0;
    let mut ok = decreasing && up > 0.0 && down < 0.0;
    // locate the sign change of the lambda adjustment below mu = 0.35
    let shift = |mu: f64| recalc_lambda(&scenario(d, mu, z)).map(|r| r.n_prime - n0);
    let (mut lo, mut hi) = (-0.5, 0.35);
    let flip = if shift(lo).map_err(|e| e.to_string())? < 0.0 {
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if shift(mid).map_err(|e| e.to_string())? < 0.0 { lo = mid } else { hi = mid }
        }
        format!("{:.3}", 0.5 * (lo + hi))
    } else {
        "none above -0.5".to_string()
    };
    let shown: Vec<String> = sizes.iter().map(|n| format!("{n:.2}")).collect();
    let mut notes = vec![format!(
        "fixed-type-II n' over mu 0.2..0.6: [{}]; lambda n'-n(z): mu=0.35 {up:+.3}, mu=0.1 {down:+.3}, sign change at mu {flip}",
        shown.join(", ")
    )];
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(60));
    verdict(ok, notes)
}

/// Moves all critical values and scales the second stage.
fn perturbed(d: &TwoStageDesign, shift: f64, scale: f64) -> TwoStageDesign {
    let m = d.m();
    TwoStageDesign::new(
        m,
        d.futility_boundary() - 0.1 * shift.signum(),
        d.efficacy_boundary() + 0.1 * shift.signum(),
        d.n_pivots().iter().map(|&n| m + scale * (n - m)).collect(),
        d.c_pivots().iter().map(|&c| c + shift).collect(),
    )
    .unwrap()
}

fn criterion_6(designs: &[(&str, Design)]) -> Check {
    let t = Instant::now();
    let reps = 10_000_000;
    let (mut ok, mut notes) = (true, vec![]);
    for (i, (name, d)) in designs.iter().enumerate() {
        let oc: OperatingCharacteristics = d.operating_characteristics(&prior()).map_err(|e| e.to_string())?;
        let seed = 1000 + i as u64;
        let null = simulate(d, &SimConfig { replicates: reps, seed, effect: EffectModel::Fixed(0.0) }).map_err(|e| e.to_string())?;
        let bayes = simulate(d, &SimConfig { replicates: reps, seed: seed + 500, effect: EffectModel::Prior(prior()) })
            .map_err(|e| e.to_string())?;
        let scores = [
            null.rejection_rate.z_score(oc.max_type_one),
            bayes.rejection_rate.z_score(oc.expected_power),
            bayes.expected_n.z_score(oc.expected_n),
            bayes.sd_n.z_score(oc.sd_n),
        ];
        let worst = scores.iter().map(|s| s.abs()).fold(0.0f64, f64::max);
        let pass = scores.iter().all(|s| s.abs() <= 3.0);
        ok &= pass;
        notes.push(format!("{name}: max|z|={worst:.2}"));
    }
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(600));
    verdict(ok, notes)
}

fn criterion_7() -> Check {
    let t = Instant::now();
    let cfg = |seed| SimConfig { replicates: 1_000_000, seed, effect: EffectModel::Fixed(0.4) };
    let study = |theta: f64, seed| estimator_sampling_stats(theta, 26.0, 79.0, 1.96, &prior(), 0.4, &cfg(seed));
    let s = study(0.4, 7).map_err(|e| e.to_string())?;
    let low = study(0.2, 8).map_err(|e| e.to_string())?;
    let high = study(0.6, 9).map_err(|e| e.to_string())?;
    let mse = s.pp.mse.value < s.ocp.mse.value;
    let mae = s.pp.mae.value < s.ocp.mae.value;
    let bias = s.acp.bias.value.abs() < s.ocp.bias.value.abs();
    let shape = s.ocp.sd > low.ocp.sd && s.ocp.sd > high.ocp.sd;
    let mut ok = mse && mae && bias && shape;
    let mut notes = vec![format!(
        "MSE pp={:.4} ocp={:.4}; MAE pp={:.4} ocp={:.4}; |bias| acp={:.4} ocp={:.4}; SD(OCP) at 0.2/0.4/0.6 = {:.4}/{:.4}/{:.4}",
        s.pp.mse.value, s.ocp.mse.value, s.pp.mae.value, s.ocp.mae.value,
        s.acp.bias.value.abs(), s.ocp.bias.value.abs(), low.ocp.sd, s.ocp.sd, high.ocp.sd
    )];
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(120));
    verdict(ok, notes)
}

fn criterion_8(naive_policy: &NaiveRecalcPolicy, naive_f: f64, opt: &TwoStageDesign) -> Check {
    let t = Instant::now();
    // pointwise naive sizes on the continuation region
    let h = 0.02;
    let zs: Vec<f64> = (1..).map(|i| naive_f + i as f64 * h).take_while(|&z| z <= 4.0).collect();
    let mut n = vec![];
    for &z in &zs {
        let r = naive_recalc_pointwise(naive_policy, z).map_err(|e| e.to_string())?;
        if r.stopped_for_futility {
            return Err(format!("futility stop at z={z:.3} inside the continuation region"));
        }
        n.push(r.n_prime);
    }
    let min_second = n.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
    let convex = min_second >= -1e-6;

    let grid = interior_grid(opt, 600);
    let (f, e) = (opt.futility_boundary(), opt.efficacy_boundary());
    let argmax = grid.iter().copied().fold((f, f64::MIN), |a, z| if opt.n_of(z) > a.1 { (z, opt.n_of(z)) } else { a }).0;
    let lower_third = argmax < f + (e - f) / 3.0;
    let pp: Vec<f64> = grid
        .iter()
        .map(|&z| predictive_power(&prior(), InterimObservation::new(opt.m(), z).unwrap(), opt.n_of(z), opt.c_of(z)).unwrap())
        .collect();
    let drop = pp.windows(2).map(|w| w[0] - w[1]).fold(0.0f64, f64::max);
    let monotone = drop <= 1e-9;
    let mut ok = convex && lower_third && monotone;
    let mut notes = vec![format!(
        "naive min 2nd diff={min_second:.2e}; optimal argmax n at z={argmax:.3} (lower third ends {:.3}); largest PP decrease={drop:.2e}",
        f + (e - f) / 3.0
    )];
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(60));
    verdict(ok, notes)
}

fn criterion_9() -> Check {
    let t = Instant::now();
    let sharp = TruncatedNormalPrior::new(0.4, 1e-4, -0.5, 1.0).unwrap();
    let mut worst = 0.0f64;
    for i in 0..=60 {
        let z = -1.0 + 5.0 * i as f64 / 60.0;
        let obs = InterimObservation::new(26.0, z).unwrap();
        let pp = predictive_power(&sharp, obs, 79.0, 1.96).map_err(|e| e.to_string())?;
        let acp = assumed_cp(obs, 79.0, 1.96, 0.4).map_err(|e| e.to_string())?;
        worst = worst.max((pp - acp).abs());
    }
    let mut ok = worst < 1e-3;
    let mut notes = vec![format!("max |PP-ACP|={worst:.2e}")];
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(1));
    verdict(ok, notes)
}

/// Monte Carlo conditional error of a design given the statistic after
/// `m′ < m` subjects, simulating the remaining data under the null.
fn mc_conditional_error(d: &TwoStageDesign, m_prime: f64, z_prime: f64, reps: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = d.m();
    let mut hits = 0u64;
    for _ in 0..reps {
        let y1: f64 = rng.sample(StandardNormal);
        let z_m = (m_prime.sqrt() * z_prime + (m - m_prime).sqrt() * y1) / m.sqrt();
        let reject = if z_m <= d.futility_boundary() {
            false
        } else if z_m >= d.efficacy_boundary() {
            true
        } else {
            let (n, c) = (d.n_of(z_m), d.c_of(z_m));
            let y2: f64 = rng.sample(StandardNormal);
            (m.sqrt() * z_m + (n - m).sqrt() * y2) / n.sqrt() > c
        };
        hits += reject as u64;
    }
    let p = hits as f64 / reps as f64;
    (p, (p * (1.0 - p) / reps as f64).sqrt())
}

fn criterion_10(d: &TwoStageDesign) -> Check {
    let t = Instant::now();
    let m = d.m();
    let (f, e) = (d.futility_boundary(), d.efficacy_boundary());
    let (mut worst, mut middle, mut limit) = (0.0f64, 0.0f64, 0.0f64);
    for z in interior_grid(d, 41) {
        let planned = d.conditional_error(z);
        let gap = (conditional_error_early(d, m - 1.0, z).map_err(|e| e.to_string())? - planned).abs();
        worst = worst.max(gap);
        if (z - f) > (e - f) / 3.0 && (e - z) > (e - f) / 3.0 {
            middle = middle.max(gap);
        }
        limit = limit.max((conditional_error_early(d, m - 1e-3, z).map_err(|e| e.to_string())? - planned).abs());
    }
    let mut worst_z = 0.0f64;
    for (i, z) in [0.0, 0.5, 1.0, 1.5, 2.0].into_iter().enumerate() {
        let exact = conditional_error_early(d, 20.0, z).map_err(|e| e.to_string())?;
        let (p, se) = mc_conditional_error(d, 20.0, z, 400_000, 77 + i as u64);
        worst_z = worst_z.max(((p - exact) / se.max(1e-12)).abs());
    }
    let mut ok = worst < 1e-3 && worst_z <= 3.0;
    let mut notes = vec![format!(
        "max |CE(m-1)-CE(m)|={worst:.2e} (middle third {middle:.2e}, at m-0.001 {limit:.2e}); MC at m'=20 max|z|={worst_z:.2}"
    )];
    budget(&mut ok, &mut notes, t.elapsed(), Duration::from_secs(60));
    verdict(ok, notes)
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Check, Duration)> = vec![];
    // `setup` is time spent building inputs the criterion itself judges
    let mut record = |id: usize, name: &'static str, setup: Duration, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let r = f();
        let elapsed = setup + t.elapsed();
        let (tag, text) = match &r {
            Ok(s) => ("PASS", s),
            Err(s) => ("FAIL", s),
        };
        println!("{tag} criterion {id:>2} ({name}, {:.1}s): {text}", elapsed.as_secs_f64());
        results.push((id, name, r, elapsed));
    };

    record(1, "single-stage sample size", Duration::ZERO, &mut criterion_1);

    let policy = naive_policy();
    let t = Instant::now();
    let naive = naive_adaptive_design(&policy, 401).expect("naive design");
    let naive_time = t.elapsed();
    record(2, "naive mandatory design", naive_time, &mut || criterion_2(&naive, naive_time));

    let t = Instant::now();
    let opt = optimize_two_stage(&prior(), &OptimizerConfig::default()).expect("optimal design");
    let opt_time = t.elapsed();
    println!("     optimal design: {}", describe(&opt));
    record(3, "optimal two-stage design", opt_time, &mut || criterion_3(&opt, opt_time));
    let d = &opt.design;
    record(4, "recalculation invariance", Duration::ZERO, &mut || criterion_4(d));
    record(5, "recalculation direction", Duration::ZERO, &mut || criterion_5(d));
    let designs = [
        ("single-stage", Design::SingleStage(base_design())),
        ("naive", Design::TwoStage(naive.clone())),
        ("optimal", Design::TwoStage(d.clone())),
        ("perturbed+", Design::TwoStage(perturbed(d, 0.1, 1.2))),
        ("perturbed-", Design::TwoStage(perturbed(d, -0.15, 0.8))),
    ];
    record(6, "quadrature vs Monte Carlo", Duration::ZERO, &mut || criterion_6(&designs));
    record(7, "interim estimator study", Duration::ZERO, &mut criterion_7);
    record(8, "shape properties", Duration::ZERO, &mut || criterion_8(&policy, naive.futility_boundary(), d));
    record(9, "PP tends to ACP", Duration::ZERO, &mut criterion_9);
    record(10, "early-interim conditional error", Duration::ZERO, &mut || criterion_10(d));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}

fn describe(opt: &OptimalDesign) -> String {
    let p = opt.design.params();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    format!(
        "m={} f={:.4} e={:.4} n=[{}] c=[{}] evaluations={}",
        p.m,
        p.futility_boundary,
        p.efficacy_boundary,
        fmt(&p.n_pivots),
        fmt(&p.c_pivots),
        opt.evaluations
    )
}
