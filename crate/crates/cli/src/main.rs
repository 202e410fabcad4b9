//! `tchoice`: command-line front end for the treatment-choice library.
//!
//! Exit codes: 0 on success, 2 on usage or input errors, 1 on numeric
//! failures (non-convergence, failed certificates, rank deficiency).

mod output;
mod rule_spec;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use treatment_choice::dominance::dominance_certificate;
use treatment_choice::lfp::{saddle_certificate, tau_star_report, write_saddle_curve_csv};
use treatment_choice::planning::{plan_es, plan_ht, plan_msr_target};
use treatment_choice::regression::{fit_with, Dataset, FitOptions};
use treatment_choice::reports::{
    figure1, figures3to6, table1, write_curves_csv, write_table1_csv, Grid,
};
use treatment_choice::risk::{
    exact_risk_with_tails, risk_curve, simulate_with_tails, worst_case, write_risk_curve_csv,
    RiskCriterion,
};
use treatment_choice::rules::RuleEvaluation;
use treatment_choice::{DiscretePrior, Error, GaussianExperiment, QuadratureSpec, RngSeed};

use rule_spec::{RuleContext, RuleSpec};

/// Tolerance for a fresh `τ*` solve.
const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "tchoice",
    version,
    about = "Treatment-choice rules under nonlinear regret"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Payload format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write the payload here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Use this `τ*` instead of the cached or solved value.
    #[arg(long, global = true)]
    tau_star: Option<f64>,

    /// JSON file with a `tau_star` field; written after a fresh solve if absent.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PlanMode {
    MsrTarget,
    Es,
    Ht,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum WorstCaseOf {
    Msr,
    MeanRegret,
}

fn parse_prior(text: &str) -> Result<DiscretePrior, String> {
    DiscretePrior::parse(text).map_err(|e| e.to_string())
}

/// Rule selection shared by the rule-reading subcommands.
#[derive(Debug, Args, Serialize)]
struct RuleArgs {
    /// es | ht[:alpha] | minimax[:tau] | bayes-flat | post-match | threshold:t |
    /// mix:base,lambda | prior-bayes | JSON object.
    #[arg(long, allow_hyphen_values = true)]
    rule: RuleSpec,

    /// Size of the `ht` rule when not given inline.
    #[arg(long)]
    alpha: Option<f64>,

    /// Prior for `prior-bayes`, written `t1:w1,t2:w2,...`.
    #[arg(long, value_parser = parse_prior, allow_hyphen_values = true)]
    prior: Option<DiscretePrior>,

    /// Exponent of `g(r) = r^alpha_g` for `prior-bayes`.
    #[arg(long, default_value_t = 2.0)]
    alpha_g: f64,

    /// Noise sd of the statistic for `prior-bayes`.
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
}

/// A Gaussian experiment `Ȳ ~ N(τ, σ²/n)`.
#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long, allow_negative_numbers = true)]
    tau: f64,

    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    #[arg(long, default_value_t = 1)]
    n: u64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Solve for the least-favorable prior location `τ*`.
    SolveTauStar {
        #[arg(long, default_value_t = SOLVE_TOL)]
        tol: f64,
    },
    /// Evaluate a rule at statistic values.
    RuleEval {
        #[command(flatten)]
        rule: RuleArgs,

        /// Standardized statistic; repeatable.
        #[arg(long, allow_negative_numbers = true)]
        stat: Vec<f64>,

        /// Statistic grid `lo:hi:step`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<Grid>,
    },
    /// Exact risk at one state, or the worst case over states.
    Risk {
        #[command(flatten)]
        rule: RuleArgs,

        #[command(flatten)]
        exp: ExperimentArgs,

        /// Report `P(Reg > c)` for each `c`; repeatable.
        #[arg(long)]
        tail: Vec<f64>,

        /// Report the supremum over `τ` of this criterion instead; `--tau` is ignored.
        #[arg(long, value_enum)]
        worst_case: Option<WorstCaseOf>,
    },
    /// Exact risk over a grid of states.
    RiskCurve {
        #[command(flatten)]
        rule: RuleArgs,

        /// State grid `lo:hi:step`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,

        #[arg(long, default_value_t = 1.0)]
        sigma: f64,

        #[arg(long, default_value_t = 1)]
        n: u64,
    },
    /// Monte Carlo risk summary with standard errors.
    Simulate {
        #[command(flatten)]
        rule: RuleArgs,

        #[command(flatten)]
        exp: ExperimentArgs,

        #[arg(long)]
        seed: u64,

        #[arg(long, default_value_t = 10_000)]
        reps: u64,

        #[arg(long)]
        tail: Vec<f64>,
    },
    /// Saddle-point certificate for the minimax rule.
    Saddle,
    /// Certificate that a complement mixture dominates a threshold rule.
    Dominate {
        /// Threshold `t` of the singleton rule.
        #[arg(long, allow_negative_numbers = true)]
        threshold: f64,

        #[arg(long)]
        tau_bar: f64,

        #[arg(long, default_value_t = 2.0)]
        alpha_g: f64,

        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,

        /// Fraction of `λ*` used as the mixing weight.
        #[arg(long, default_value_t = treatment_choice::dominance::DEFAULT_SHRINK)]
        shrink: f64,

        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
    },
    /// Sample sizes and comparisons against ES and HT rules.
    SampleSize {
        #[arg(long, value_enum)]
        mode: PlanMode,

        #[arg(long, default_value_t = 1.0)]
        sigma: f64,

        /// Target root worst-case MSR (msr-target) or welfare tolerance (es).
        #[arg(long)]
        epsilon: Option<f64>,

        #[arg(long, default_value_t = 0.05)]
        alpha: f64,

        #[arg(long, default_value_t = 0.8)]
        beta: f64,

        /// Alternative at which the HT rule has power `beta`.
        #[arg(long, alias = "tau", allow_negative_numbers = true)]
        tau_alt: Option<f64>,

        /// Rule to plan for (msr-target) or compare against (es, ht).
        #[arg(long, allow_hyphen_values = true)]
        rule: Option<RuleSpec>,
    },
    /// OLS fit and treatment fractions from a CSV with columns `y`, `d` and covariates.
    Regress {
        #[arg(long)]
        csv: PathBuf,

        /// Do not append an intercept column.
        #[arg(long)]
        no_intercept: bool,

        /// Divide the residual sum of squares by `n − k`.
        #[arg(long)]
        unbiased: bool,
    },
    /// Treatment fractions of the four rules on the quantile grid.
    Table1,
    /// Regret and welfare statistics of ES and minimax at `τ = 1`.
    Figure1 {
        #[arg(long)]
        seed: Option<u64>,

        #[arg(long, default_value_t = 10_000, requires = "seed")]
        reps: u64,
    },
    /// Rule shapes and risk curves in long format.
    Figures3to6 {
        /// State grid for the risk panels.
        #[arg(long, default_value = "0:4:0.05", allow_hyphen_values = true)]
        grid: Grid,

        /// Statistic grid for the rule panel.
        #[arg(long, default_value = "-3:3:0.05", allow_hyphen_values = true)]
        stat_grid: Grid,
    },
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Input(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("I/O: {e}"))
    }
}

type Outcome = Result<(), Failure>;

/// `--tau-star`, then the constants file, then a fresh solve.
fn resolve_tau_star(cli: &Cli) -> Result<f64, Failure> {
    if let Some(t) = cli.tau_star {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Usage(format!(
                "--tau-star must be positive, got {t}"
            )));
        }
        eprintln!("tchoice: tau_star = {t} (flag)");
        return Ok(t);
    }
    if let Some(path) = cli.constants.as_deref().filter(|p| p.exists()) {
        let text = std::fs::read_to_string(path)?;
        let t = serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.get("tau_star").and_then(|t| t.as_f64()))
            .filter(|t| *t > 0.0 && t.is_finite())
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "{}: no positive number under 'tau_star'",
                    path.display()
                ))
            })?;
        eprintln!("tchoice: tau_star = {t} (cache {})", path.display());
        return Ok(t);
    }
    let report = tau_star_report(&QuadratureSpec::default(), SOLVE_TOL)?;
    if let Some(path) = cli.constants.as_deref() {
        output::json(std::fs::File::create(path)?, &report)?;
    }
    eprintln!("tchoice: tau_star = {} (solved)", report.tau_star);
    Ok(report.tau_star)
}

fn resolve_rule(cli: &Cli, args: &RuleArgs) -> Result<treatment_choice::TreatmentRule, Failure> {
    let tau_star = if args.rule.needs_tau_star() {
        Some(resolve_tau_star(cli)?)
    } else {
        None
    };
    let ctx = RuleContext {
        alpha: args.alpha,
        prior: args.prior.as_ref(),
        alpha_g: args.alpha_g,
        noise_sd: args.noise_sd,
    };
    args.rule.resolve(tau_star, &ctx).map_err(Failure::Usage)
}

fn sink(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    Ok(output::open(cli.output.as_deref())?)
}

/// JSON, or `field,value` CSV.
fn emit_record<T: Serialize>(cli: &Cli, value: &T) -> Outcome {
    let out = sink(cli)?;
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => output::json(out, value)?,
        Format::Csv => output::fields_csv(out, value)?,
    }
    Ok(())
}

/// JSON, or a tabular CSV written by `csv`.
fn emit_table<T: Serialize>(
    cli: &Cli,
    default: Format,
    value: &T,
    csv: impl FnOnce(Box<dyn Write>) -> treatment_choice::Result<()>,
) -> Outcome {
    let out = sink(cli)?;
    match cli.format.unwrap_or(default) {
        Format::Json => output::json(out, value)?,
        Format::Csv => csv(out)?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let spec = QuadratureSpec::default();
    match &cli.command {
        Command::SolveTauStar { tol } => {
            let report = tau_star_report(&spec, *tol)?;
            if let Some(path) = cli.constants.as_deref() {
                output::json(std::fs::File::create(path)?, &report)?;
            }
            emit_record(cli, &report)
        }
        Command::RuleEval { rule, stat, grid } => {
            let r = resolve_rule(cli, rule)?;
            let mut stats = stat.clone();
            if let Some(g) = grid {
                stats.extend(g.points());
            }
            if stats.is_empty() {
                return Err(Failure::Usage("rule-eval needs --stat or --grid".into()));
            }
            let evals: Vec<RuleEvaluation> =
                stats.iter().map(|&s| RuleEvaluation::new(&r, s)).collect();
            let csv = |mut out: Box<dyn Write>| -> std::io::Result<()> {
                writeln!(out, "stat,value")?;
                for e in &evals {
                    writeln!(out, "{},{}", e.stat, e.value)?;
                }
                out.flush()
            };
            let out = sink(cli)?;
            match (cli.format.unwrap_or(Format::Json), evals.as_slice()) {
                (Format::Json, [single]) => output::json(out, single)?,
                (Format::Json, many) => output::json(out, &many)?,
                (Format::Csv, _) => csv(out)?,
            }
            Ok(())
        }
        Command::Risk {
            rule,
            exp,
            tail,
            worst_case: which,
        } => {
            let r = resolve_rule(cli, rule)?;
            match which {
                Some(which) => {
                    let criterion = match which {
                        WorstCaseOf::Msr => RiskCriterion::MeanSquareRegret,
                        WorstCaseOf::MeanRegret => RiskCriterion::MeanRegret,
                    };
                    let wc = worst_case(&r, exp.sigma, exp.n, criterion, &spec)?;
                    emit_record(cli, &wc)
                }
                None => {
                    let e = GaussianExperiment::new(exp.tau, exp.sigma, exp.n)?;
                    emit_record(cli, &exact_risk_with_tails(&r, &e, &spec, tail)?)
                }
            }
        }
        Command::RiskCurve {
            rule,
            grid,
            sigma,
            n,
        } => {
            let r = resolve_rule(cli, rule)?;
            let curve = risk_curve(&r, &grid.points(), *sigma, *n, &spec)?;
            emit_table(cli, Format::Csv, &curve, |out| {
                write_risk_curve_csv(out, &curve)
            })
        }
        Command::Simulate {
            rule,
            exp,
            seed,
            reps,
            tail,
        } => {
            let r = resolve_rule(cli, rule)?;
            let e = GaussianExperiment::new(exp.tau, exp.sigma, exp.n)?;
            emit_record(
                cli,
                &simulate_with_tails(&r, &e, *reps, RngSeed(*seed), tail)?,
            )
        }
        Command::Saddle => {
            let cert = saddle_certificate(resolve_tau_star(cli)?, &spec)?;
            emit_table(cli, Format::Json, &cert, |out| {
                write_saddle_curve_csv(out, &cert.curve_samples)
            })?;
            if cert.is_valid() {
                Ok(())
            } else {
                Err(Failure::Numeric(format!(
                    "saddle check failed: gap {:e}, argsup {}, max excess {:e}",
                    cert.objective_gap, cert.argsup_tau, cert.max_excess
                )))
            }
        }
        Command::Dominate {
            threshold,
            tau_bar,
            alpha_g,
            noise_sd,
            shrink,
            grid_step,
        } => {
            let cert = dominance_certificate(
                *threshold, *tau_bar, *alpha_g, *noise_sd, *shrink, *grid_step,
            )?;
            emit_table(cli, Format::Json, &cert, |out| {
                treatment_choice::dominance::write_dominance_csv(out, &cert)
            })?;
            match cert.first_violation(*grid_step) {
                None => Ok(()),
                Some(p) => Err(Failure::Numeric(format!(
                    "dominance fails at tau = {}: margin {:e}",
                    p.tau, p.margin
                ))),
            }
        }
        Command::SampleSize {
            mode,
            sigma,
            epsilon,
            alpha,
            beta,
            tau_alt,
            rule,
        } => {
            let spec_rule = rule.clone().unwrap_or_else(RuleSpec::minimax);
            let args = RuleArgs {
                rule: spec_rule,
                alpha: None,
                prior: None,
                alpha_g: 2.0,
                noise_sd: 1.0,
            };
            let r = resolve_rule(cli, &args)?;
            let need = |v: Option<f64>, flag: &str| {
                v.ok_or_else(|| Failure::Usage(format!("--mode {mode:?} needs {flag}")))
            };
            let plan = match mode {
                PlanMode::MsrTarget => plan_msr_target(&r, *sigma, need(*epsilon, "--epsilon")?)?,
                PlanMode::Es => plan_es(&r, *sigma, need(*epsilon, "--epsilon")?)?,
                PlanMode::Ht => plan_ht(&r, *sigma, *alpha, *beta, need(*tau_alt, "--tau-alt")?)?,
            };
            emit_record(cli, &plan)
        }
        Command::Regress {
            csv,
            no_intercept,
            unbiased,
        } => {
            let ds = Dataset::from_csv_path(csv, !no_intercept)?;
            let opts = FitOptions {
                tau_star: resolve_tau_star(cli)?,
                unbiased_variance: *unbiased,
            };
            emit_record(cli, &fit_with(&ds, &opts)?)
        }
        Command::Table1 => {
            let rows = table1(resolve_tau_star(cli)?);
            emit_table(cli, Format::Csv, &rows, |out| write_table1_csv(out, &rows))
        }
        Command::Figure1 { seed, reps } => {
            let tau_star = resolve_tau_star(cli)?;
            let report = figure1(tau_star, seed.map(|s| (*reps, RngSeed(s))), &spec)?;
            emit_record(cli, &report)
        }
        Command::Figures3to6 { grid, stat_grid } => {
            let tau_star = resolve_tau_star(cli)?;
            let points = figures3to6(tau_star, &stat_grid.points(), &grid.points(), &spec)?;
            emit_table(cli, Format::Csv, &points, |out| {
                write_curves_csv(out, &points)
            })
        }
    }
}

fn describe(cli: &Cli) -> String {
    serde_json::to_string(cli).unwrap_or_else(|e| format!("<unprintable: {e}>"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    eprintln!("tchoice: config {}", describe(&cli));
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("tchoice: error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("tchoice: error: {msg}");
            ExitCode::from(1)
        }
    }
}
