//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::PathBuf;

use adaptrial::design::{Design, SingleStageDesign, TwoStageDesign};
use adaptrial::mc::{simulate, EffectModel, SimConfig};
use adaptrial::optimal::{optimize_two_stage, OptimizerConfig};
use adaptrial::planners::{naive_adaptive_design, naive_recalc_pointwise, single_stage_sample_size, NaiveRecalcPolicy, RecalcResult};
use adaptrial::power::{assumed_cp, observed_cp, posterior, predictive_power};
use adaptrial::recalc::{conditional_error_at, conditional_pp_target, default_n_cap, recalc_fixed_type2, recalc_lambda, RevisedScenario};
use adaptrial::{InterimObservation, TruncatedNormalPrior};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::document::{digest, Constraints, DesignDocument};
use crate::{Outcome, UsageError};

#[derive(Debug, Parser)]
#[command(name = "adaptrial", version, about = "Hybrid-Bayesian design and recalculation of two-stage single-arm trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a design and write it as a JSON document
    #[command(subcommand)]
    Design(DesignCommand),
    /// Interim power summaries for an observed statistic
    Monitor(MonitorArgs),
    /// Recalculate the final sample size at an interim analysis
    #[command(subcommand)]
    Recalc(RecalcCommand),
    /// Write a curve of a design as CSV
    Curves(CurvesArgs),
    /// Monte Carlo operating characteristics of a design
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub prior_mu: f64,
    #[arg(long)]
    pub prior_sigma: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub prior_lower: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub prior_upper: f64,
}

impl PriorArgs {
    fn prior(&self) -> anyhow::Result<TruncatedNormalPrior> {
        Ok(TruncatedNormalPrior::new(self.prior_mu, self.prior_sigma, self.prior_lower, self.prior_upper)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum DesignCommand {
    /// Smallest single-stage design reaching the expected-power target
    SingleStage {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        ep_target: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage design minimising the expected sample size
    TwoStageOptimal {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 7)]
        pivots: usize,
        #[arg(long, default_value_t = 5)]
        m_min: u32,
        #[arg(long, default_value_t = 120)]
        m_max: u32,
        #[arg(long, default_value_t = OptimizerConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = OptimizerConfig::default().multistarts)]
        multistarts: usize,
        #[arg(long, default_value_t = OptimizerConfig::default().max_evaluations)]
        max_evaluations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage design induced by mandatory naive recalculation of a
    /// single-stage design
    Naive {
        /// single-stage design document
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        beta_cond: f64,
        #[arg(long)]
        n_min: f64,
        #[arg(long)]
        n_max: f64,
        #[arg(long, default_value_t = 401)]
        grid_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub m: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub zm: f64,
    /// point alternative for assumed conditional power (default: prior mean parameter)
    #[arg(long, allow_hyphen_values = true)]
    pub theta1: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub zm: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub new_prior_mu: f64,
    /// defaults to the original prior's scale
    #[arg(long)]
    pub new_prior_sigma: Option<f64>,
    /// largest admissible final size (default: four times the single-stage size)
    #[arg(long)]
    pub n_cap: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum RecalcCommand {
    /// Minimal size with the conditional type-II budget, spending the base
    /// design's conditional error
    Naive {
        /// single-stage design document
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        m: f64,
        #[arg(long, allow_hyphen_values = true)]
        zm: f64,
        #[arg(long)]
        beta_cond: f64,
        #[arg(long)]
        n_min: f64,
        #[arg(long)]
        n_max: f64,
        #[arg(long)]
        json: bool,
    },
    /// Keep the promised predictive power under a revised prior
    Consistent {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// interim size actually realised (default: the planned one)
        #[arg(long)]
        m_prime: Option<f64>,
    },
    /// Keep the design's trade-off between sample size and predictive power
    Lambda {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Curve {
    Nz,
    Cz,
    Pp,
    RecalcVsMu,
    CeEarly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecalcMode {
    Consistent,
    Lambda,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, value_enum)]
    pub what: Curve,
    /// `start:stop:step`, both ends included
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
    /// interim statistic for `recalc-vs-mu` and `ce-early`
    #[arg(long, allow_hyphen_values = true)]
    pub zm: Option<f64>,
    /// interim size for `pp` on a single-stage design
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta1: Option<f64>,
    #[arg(long, value_enum, default_value = "consistent")]
    pub mode: RecalcMode,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("effect").required(true).args(["theta", "use_prior"]))]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub use_prior: bool,
    #[arg(long, default_value_t = 1_000_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

/// Numbers as JSON; infinities become strings.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else if x < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

fn report(fields: &[(&str, Value)], as_json: bool) -> String {
    if as_json {
        let map: serde_json::Map<String, Value> = fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("plain values serialise");
        s.push('\n');
        s
    } else {
        let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in fields {
            let text = match v {
                Value::String(t) => t.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(s, "{k:<width$} = {text}");
        }
        s
    }
}

fn oc_fields(d: &Design, prior: &TruncatedNormalPrior) -> anyhow::Result<Vec<(&'static str, Value)>> {
    let oc = d.operating_characteristics(prior)?;
    Ok(vec![
        ("max_type_one", num(oc.max_type_one)),
        ("expected_power", num(oc.expected_power)),
        ("expected_n", num(oc.expected_n)),
        ("sd_n", num(oc.sd_n)),
    ])
}

fn design_fields(d: &Design) -> Vec<(&'static str, Value)> {
    match d {
        Design::SingleStage(s) => vec![("kind", json!("single-stage")), ("n", num(s.n)), ("c", num(s.c))],
        Design::TwoStage(t) => vec![
            ("kind", json!("two-stage")),
            ("m", num(t.m())),
            ("futility_boundary", num(t.futility_boundary())),
            ("efficacy_boundary", num(t.efficacy_boundary())),
            ("n_pivots", json!(t.n_pivots())),
            ("c_pivots", json!(t.c_pivots())),
        ],
    }
}

fn finish_design(doc: DesignDocument, out: &Option<PathBuf>, extra: Vec<(&'static str, Value)>) -> anyhow::Result<String> {
    let d = doc.design()?;
    if let Some(path) = out {
        doc.save(path)?;
    }
    let mut fields = design_fields(&d);
    fields.extend(oc_fields(&d, &doc.prior())?);
    fields.extend(extra);
    let mut text = report(&fields, false);
    if out.is_none() {
        text.push_str(&doc.to_json()?);
    }
    Ok(text)
}

fn run_design(cmd: &DesignCommand) -> anyhow::Result<Outcome> {
    let text = match cmd {
        DesignCommand::SingleStage { prior, alpha, ep_target, out } => {
            finish_design(single_stage_document(prior.prior()?, *alpha, *ep_target)?, out, vec![])?
        }
        DesignCommand::TwoStageOptimal { prior, alpha, beta, pivots, m_min, m_max, seed, multistarts, max_evaluations, out } => {
            let prior = prior.prior()?;
            let config = OptimizerConfig {
                alpha: *alpha,
                beta: *beta,
                pivot_count: *pivots,
                m_bounds: (*m_min, *m_max),
                seed: *seed,
                multistarts: *multistarts,
                max_evaluations: *max_evaluations,
                ..OptimizerConfig::default()
            };
            config.validate()?;
            let opt = optimize_two_stage(&prior, &config)?;
            let doc = DesignDocument::new(
                &Design::TwoStage(opt.design.clone()),
                prior,
                Constraints { alpha: *alpha, beta: Some(*beta), beta_cond: None },
                digest(&config)?,
            );
            finish_design(doc, out, vec![("min_continuation_pp", num(opt.min_continuation_pp))])?
        }
        DesignCommand::Naive { base, m, beta_cond, n_min, n_max, grid_size, out } => {
            let doc = DesignDocument::load(base)?;
            let Design::SingleStage(base_design) = doc.design()? else {
                return Err(UsageError("naive recalculation needs a single-stage base design".into()).into());
            };
            let policy = NaiveRecalcPolicy::new(*beta_cond, *n_min, *n_max, doc.prior(), base_design, *m)?;
            let d = naive_adaptive_design(&policy, *grid_size)?;
            let settings = json!({ "base": doc.provenance.config_digest, "m": m, "beta_cond": beta_cond, "n_min": n_min, "n_max": n_max, "grid_size": grid_size });
            let out_doc = DesignDocument::new(
                &Design::TwoStage(d),
                doc.prior(),
                Constraints { alpha: doc.provenance.constraints.alpha, beta: None, beta_cond: Some(*beta_cond) },
                digest(&settings)?,
            );
            finish_design(out_doc, out, vec![])?
        }
    };
    print!("{text}");
    Ok(Outcome::Success)
}

/// Final size and critical value a design uses after `Z_m = z_m`.
fn final_analysis(d: &Design, m: f64, z_m: f64) -> anyhow::Result<(f64, f64)> {
    match d {
        Design::SingleStage(s) => {
            if !(m > 0.0 && m < s.n) {
                bail!(UsageError(format!("interim size must lie in (0, {})", s.n)));
            }
            Ok((s.n, s.c))
        }
        Design::TwoStage(t) => {
            if m != t.m() {
                bail!(UsageError(format!("the design plans its interim analysis at m = {}", t.m())));
            }
            Ok((t.n_of(z_m), t.c_of(z_m)))
        }
    }
}

pub fn monitor_fields(args: &MonitorArgs) -> anyhow::Result<Vec<(&'static str, Value)>> {
    let doc = DesignDocument::load(&args.design)?;
    let d = doc.design()?;
    let prior = doc.prior();
    let obs = InterimObservation::new(args.m, args.zm)?;
    let post = posterior(&prior, obs);
    let mut fields = vec![("m", num(args.m)), ("z_m", num(args.zm))];
    if let Design::TwoStage(t) = &d {
        if args.m == t.m() && !t.is_continuation(args.zm) {
            let decision = if args.zm <= t.futility_boundary() { "stop-futility" } else { "stop-efficacy" };
            fields.push(("decision", json!(decision)));
            fields.extend([("posterior_mu", num(post.mu)), ("posterior_sigma", num(post.sigma))]);
            return Ok(fields);
        }
    }
    let (n, c) = final_analysis(&d, args.m, args.zm)?;
    let theta1 = args.theta1.unwrap_or(prior.mu);
    fields.extend([
        ("decision", json!("continue")),
        ("n", num(n)),
        ("c", num(c)),
        ("theta1", num(theta1)),
        ("acp", num(assumed_cp(obs, n, c, theta1)?)),
        ("ocp", num(observed_cp(obs, n, c)?)),
        ("pp", num(predictive_power(&prior, obs, n, c)?)),
        ("posterior_mu", num(post.mu)),
        ("posterior_sigma", num(post.sigma)),
    ]);
    Ok(fields)
}

fn recalc_fields(r: &RecalcResult, pp_before: f64) -> Vec<(&'static str, Value)> {
    vec![
        ("n_prime", num(r.n_prime)),
        ("c_prime", num(r.c_prime)),
        ("conditional_error_budget", num(r.conditional_error_budget)),
        ("pp_target", num(r.pp_target)),
        ("pp_before", num(pp_before)),
        ("pp_achieved", num(r.pp_achieved)),
        ("stopped_for_futility", json!(r.stopped_for_futility)),
    ]
}

fn scenario(args: &ScenarioArgs, m_prime: Option<f64>) -> anyhow::Result<(RevisedScenario, TwoStageDesign)> {
    let doc = DesignDocument::load(&args.design)?;
    let Design::TwoStage(d) = doc.design()? else {
        bail!(UsageError("recalculation needs a two-stage design".into()));
    };
    let prior = doc.prior();
    let revised = TruncatedNormalPrior::new(args.new_prior_mu, args.new_prior_sigma.unwrap_or(prior.sigma), prior.lower, prior.upper)?;
    let n_cap = match args.n_cap {
        Some(c) => c,
        None => default_n_cap(&prior, doc.provenance.constraints.alpha, doc.provenance.constraints.beta.unwrap_or(0.2))?,
    };
    let s = RevisedScenario::new(d.clone(), prior, revised, m_prime.unwrap_or(d.m()), args.zm, n_cap)?;
    Ok((s, d))
}

/// PP of the unchanged design under the revised prior, when defined.
fn pp_unchanged(s: &RevisedScenario, d: &TwoStageDesign) -> anyhow::Result<f64> {
    Ok(conditional_pp_target(d, &s.revised_prior, s.m_prime, s.z_m_prime)?)
}

pub fn recalc_report(cmd: &RecalcCommand) -> anyhow::Result<(Vec<(&'static str, Value)>, bool, bool)> {
    Ok(match cmd {
        RecalcCommand::Naive { design, m, zm, beta_cond, n_min, n_max, json } => {
            let doc = DesignDocument::load(design)?;
            let Design::SingleStage(base) = doc.design()? else {
                bail!(UsageError("naive recalculation needs a single-stage design".into()));
            };
            let policy = NaiveRecalcPolicy::new(*beta_cond, *n_min, *n_max, doc.prior(), base, *m)?;
            let r = naive_recalc_pointwise(&policy, *zm)?;
            let before = predictive_power(&doc.prior(), InterimObservation::new(*m, *zm)?, base.n, base.c)?;
            (recalc_fields(&r, before), r.stopped_for_futility, *json)
        }
        RecalcCommand::Consistent { scenario: a, m_prime } => {
            let (s, d) = scenario(a, *m_prime)?;
            let r = recalc_fixed_type2(&s)?;
            let mut fields = vec![("m_prime", num(s.m_prime))];
            fields.extend(recalc_fields(&r, pp_unchanged(&s, &d)?));
            if s.m_prime == d.m() && d.is_continuation(s.z_m_prime) {
                fields.push(("n_original", num(d.n_of(s.z_m_prime))));
            }
            (fields, r.stopped_for_futility, a.json)
        }
        RecalcCommand::Lambda { scenario: a } => {
            let (s, d) = scenario(a, None)?;
            let r = recalc_lambda(&s)?;
            let mut fields = vec![("m_prime", num(s.m_prime))];
            fields.extend(recalc_fields(&r, pp_unchanged(&s, &d)?));
            if d.is_continuation(s.z_m_prime) {
                fields.push(("n_original", num(d.n_of(s.z_m_prime))));
            }
            (fields, r.stopped_for_futility, a.json)
        }
    })
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || UsageError(format!("grid must be start:stop:step, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad().into());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (a, b, h) = (v[0], v[1], v[2]);
    if !(a.is_finite() && b.is_finite() && h.is_finite() && h > 0.0 && b >= a) {
        return Err(bad().into());
    }
    let count = ((b - a) / h + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(UsageError("grid has more than a million points".into()).into());
    }
    Ok((0..count).map(|i| a + i as f64 * h).collect())
}

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

pub fn curve_csv(args: &CurvesArgs) -> anyhow::Result<String> {
    let grid = parse_grid(&args.grid)?;
    let doc = DesignDocument::load(&args.design)?;
    let d = doc.design()?;
    let prior = doc.prior();
    let need_two_stage = || match &d {
        Design::TwoStage(t) => Ok(t.clone()),
        Design::SingleStage(_) => Err(UsageError("this curve needs a two-stage design".into())),
    };
    let need_zm = || args.zm.ok_or_else(|| UsageError("this curve needs --zm".into()));
    let mut out = String::new();
    let mut row = |cols: &[String]| {
        out.push_str(&cols.join(","));
        out.push('\n');
    };
    match args.what {
        Curve::Nz => {
            let t = need_two_stage()?;
            row(&["z_m".into(), "n".into(), "c".into(), "region".into()]);
            for z in grid {
                let region = if z <= t.futility_boundary() {
                    "futility"
                } else if z >= t.efficacy_boundary() {
                    "efficacy"
                } else {
                    "continuation"
                };
                row(&[csv_num(z), csv_num(t.n_of(z)), csv_num(t.c_of(z)), region.into()]);
            }
        }
        Curve::Cz => {
            let t = need_two_stage()?;
            row(&["z_m".into(), "c".into(), "conditional_error".into()]);
            for z in grid {
                row(&[csv_num(z), csv_num(t.c_of(z)), csv_num(t.conditional_error(z))]);
            }
        }
        Curve::Pp => {
            let m = match &d {
                Design::TwoStage(t) => t.m(),
                Design::SingleStage(_) => args.m.ok_or_else(|| UsageError("a single-stage design needs --m".into()))?,
            };
            let theta1 = args.theta1.unwrap_or(prior.mu);
            row(&["z_m".into(), "acp".into(), "ocp".into(), "pp".into()]);
            for z in grid {
                if let Design::TwoStage(t) = &d {
                    if !t.is_continuation(z) {
                        continue;
                    }
                }
                let (n, c) = final_analysis(&d, m, z)?;
                let obs = InterimObservation::new(m, z)?;
                row(&[
                    csv_num(z),
                    csv_num(assumed_cp(obs, n, c, theta1)?),
                    csv_num(observed_cp(obs, n, c)?),
                    csv_num(predictive_power(&prior, obs, n, c)?),
                ]);
            }
        }
        Curve::RecalcVsMu => {
            let t = need_two_stage()?;
            let z = need_zm()?;
            let n_cap = default_n_cap(&prior, doc.provenance.constraints.alpha, doc.provenance.constraints.beta.unwrap_or(0.2))?;
            row(&["mu".into(), "n_prime".into(), "c_prime".into(), "pp_target".into(), "pp_achieved".into()]);
            for mu in grid {
                let s = RevisedScenario::new(t.clone(), prior, prior.shifted(mu)?, args.m.unwrap_or(t.m()), z, n_cap)?;
                let r = match args.mode {
                    RecalcMode::Consistent => recalc_fixed_type2(&s)?,
                    RecalcMode::Lambda => recalc_lambda(&s)?,
                };
                row(&[csv_num(mu), csv_num(r.n_prime), csv_num(r.c_prime), csv_num(r.pp_target), csv_num(r.pp_achieved)]);
            }
        }
        Curve::CeEarly => {
            let t = need_two_stage()?;
            let z = need_zm()?;
            row(&["m_prime".into(), "conditional_error".into(), "pp_target".into()]);
            for mp in grid {
                row(&[
                    csv_num(mp),
                    csv_num(conditional_error_at(&t, mp, z)?),
                    csv_num(conditional_pp_target(&t, &prior, mp, z)?),
                ]);
            }
        }
    }
    Ok(out)
}

pub fn simulate_fields(args: &SimulateArgs) -> anyhow::Result<Vec<(&'static str, Value)>> {
    let doc = DesignDocument::load(&args.design)?;
    let d = doc.design()?;
    let effect = match args.theta {
        Some(t) if !args.use_prior => EffectModel::Fixed(t),
        None if args.use_prior => EffectModel::Prior(doc.prior()),
        _ => bail!(UsageError("give exactly one of --theta and --use-prior".into())),
    };
    let r = simulate(&d, &SimConfig { replicates: args.reps, seed: args.seed, effect })?;
    Ok(vec![
        ("replicates", json!(r.replicates)),
        ("power_replicates", json!(r.power_replicates)),
        ("rejection_rate", num(r.rejection_rate.value)),
        ("rejection_rate_se", num(r.rejection_rate.se)),
        ("expected_n", num(r.expected_n.value)),
        ("expected_n_se", num(r.expected_n.se)),
        ("sd_n", num(r.sd_n.value)),
        ("sd_n_se", num(r.sd_n.se)),
    ])
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Design(cmd) => run_design(cmd),
        Command::Monitor(args) => {
            print!("{}", report(&monitor_fields(args)?, args.json));
            Ok(Outcome::Success)
        }
        Command::Recalc(cmd) => {
            let (fields, futility, as_json) = recalc_report(cmd)?;
            print!("{}", report(&fields, as_json));
            Ok(if futility { Outcome::Futility } else { Outcome::Success })
        }
        Command::Curves(args) => {
            let csv = curve_csv(args)?;
            std::fs::write(&args.out, csv).with_context(|| format!("cannot write {}", args.out.display()))?;
            Ok(Outcome::Success)
        }
        Command::Simulate(args) => {
            print!("{}", report(&simulate_fields(args)?, args.json));
            Ok(Outcome::Success)
        }
    }
}

/// Smallest single-stage design as a document.
pub fn single_stage_document(prior: TruncatedNormalPrior, alpha: f64, ep_target: f64) -> anyhow::Result<DesignDocument> {
    let d: SingleStageDesign = single_stage_sample_size(&prior, alpha, ep_target)?;
    let settings = json!({ "alpha": alpha, "ep_target": ep_target });
    Ok(DesignDocument::new(
        &Design::SingleStage(d),
        prior,
        Constraints { alpha, beta: Some(1.0 - ep_target), beta_cond: None },
        digest(&settings)?,
    ))
}
