//! Regret risk of treatment rules in Gaussian experiments.
//!
//! With the untreated mean normalized to zero, welfare is `W = τ·δ` and regret
//! is `Reg = τ(1{τ ≥ 0} − δ)`, so `W = max(τ, 0) − Reg` and both share one
//! variance. Expectations over the statistic are exact segment sums for
//! piecewise-constant rules and Gauss–Hermite quadrature otherwise.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    find_root, gaussian_expectation, maximize_scalar, std_normal_cdf, std_normal_interval,
    QuadratureSpec, RngSeed,
};
use crate::rules::{DiscretePrior, TreatmentRule};

/// Half-width of the normalized worst-case search, in units of `σ/√n`.
pub const WORST_CASE_BRACKET: f64 = 8.0;
const SCAN_STEP: f64 = 0.01;
const REFINE_TOL: f64 = 1e-10;
/// Half-width, in statistic sds, of the window searched for level crossings.
const INVERSION_HALF_WIDTH: f64 = 40.0;
const CROSSING_SCAN_HALF_WIDTH: f64 = 12.0;
const CROSSING_SCAN_STEP: f64 = 0.01;

/// Sampling model `Ȳ ~ N(τ, σ²/n)` with known `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianExperiment {
    pub tau: f64,
    pub sigma: f64,
    pub n: u64,
}

impl GaussianExperiment {
    pub fn new(tau: f64, sigma: f64, n: u64) -> Result<Self> {
        let exp = Self { tau, sigma, n };
        exp.validate()?;
        Ok(exp)
    }

    /// The unit experiment `σ = n = 1`.
    pub fn unit(tau: f64) -> Self {
        Self {
            tau,
            sigma: 1.0,
            n: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Domain(format!(
                "tau must be finite, got {}",
                self.tau
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        Ok(())
    }

    /// Mean of the standardized statistic `√n·Ȳ/σ`, whose sd is one.
    pub fn stat_mean(&self) -> f64 {
        (self.n as f64).sqrt() * self.tau / self.sigma
    }

    /// Sd of `Ȳ`.
    pub fn standard_error(&self) -> f64 {
        self.sigma / (self.n as f64).sqrt()
    }
}

/// Regret risk summary for one rule and one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub mean_regret: f64,
    pub regret_variance: f64,
    pub mean_square_regret: f64,
    pub welfare_mean: f64,
    pub welfare_sd: f64,
    pub tail: Vec<TailProbability>,
}

impl RiskReport {
    pub fn regret_sd(&self) -> f64 {
        self.regret_variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProbability {
    pub threshold: f64,
    pub prob_regret_exceeds: f64,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Whether `target` lies within `k` standard errors of the estimate.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub threshold: f64,
    pub prob_regret_exceeds: Estimate,
}

/// Empirical counterpart of [`RiskReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub replications: u64,
    pub seed: RngSeed,
    pub mean_regret: Estimate,
    pub regret_variance: Estimate,
    pub regret_sd: Estimate,
    pub mean_square_regret: Estimate,
    pub welfare_mean: Estimate,
    pub welfare_sd: Estimate,
    pub tail: Vec<TailEstimate>,
}

/// Which regret functional a worst-case search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskCriterion {
    MeanRegret,
    MeanSquareRegret,
}

/// Supremum of a risk functional over the scanned state bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub sup: f64,
    pub argsup_tau: f64,
    /// The maximizer sits on the edge of the bracket, so the true supremum may
    /// be larger.
    pub saturated: bool,
}

/// `τ·(1{τ ≥ 0} − δ)`.
#[inline]
pub fn regret(rule_output: f64, tau: f64) -> f64 {
    let optimal = if tau >= 0.0 { 1.0 } else { 0.0 };
    tau * (optimal - rule_output)
}

/// Shortfall from the optimal action, `1{τ ≥ 0} − δ` or `δ`, which lies in [0, 1].
#[inline]
fn shortfall(rule: &TreatmentRule, tau: f64, stat: f64) -> f64 {
    let d = rule.evaluate(stat);
    if tau >= 0.0 {
        1.0 - d
    } else {
        d
    }
}

/// `E[Reg^power]` when the rule reads a statistic distributed `N(stat_mean, stat_sd²)`.
pub fn regret_moment(
    rule: &TreatmentRule,
    tau: f64,
    stat_mean: f64,
    stat_sd: f64,
    power: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(power > 0.0) {
        return Err(Error::Domain(format!(
            "regret power must be positive, got {power}"
        )));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let scale = tau.abs().powf(power);
    let mean_shortfall = match rule.jump_points() {
        Some(jumps) => segment_expectation(rule, &jumps, stat_mean, stat_sd, |d| {
            let q = if tau >= 0.0 { 1.0 - d } else { d };
            q.powf(power)
        }),
        None => gaussian_expectation(
            |s| shortfall(rule, tau, s).powf(power),
            stat_mean,
            stat_sd,
            spec,
        )?,
    };
    Ok(scale * mean_shortfall)
}

/// `E[h(δ(S))]` for a piecewise-constant rule with the given jump points.
fn segment_expectation<H: Fn(f64) -> f64>(
    rule: &TreatmentRule,
    jumps: &[f64],
    mean: f64,
    sd: f64,
    h: H,
) -> f64 {
    let mut cuts: Vec<f64> = jumps.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend(cuts.iter().copied());
    edges.push(f64::INFINITY);
    edges
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let probe = match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (true, false) => a + 1.0,
                (false, true) => b - 1.0,
                (false, false) => 0.0,
            };
            let p = std_normal_interval((a - mean) / sd, (b - mean) / sd);
            p * h(rule.evaluate(probe))
        })
        .sum()
}

/// Mean regret, regret variance, MSR and welfare summary at one state.
pub fn exact_risk(
    rule: &TreatmentRule,
    exp: &GaussianExperiment,
    spec: &QuadratureSpec,
) -> Result<RiskReport> {
    exact_risk_with_tails(rule, exp, spec, &[])
}

/// [`exact_risk`] plus `P(Reg > c)` for each threshold `c`.
pub fn exact_risk_with_tails(
    rule: &TreatmentRule,
    exp: &GaussianExperiment,
    spec: &QuadratureSpec,
    thresholds: &[f64],
) -> Result<RiskReport> {
    exp.validate()?;
    let m = exp.stat_mean();
    let mean_regret = regret_moment(rule, exp.tau, m, 1.0, 1.0, spec)?;
    let mean_square_regret = regret_moment(rule, exp.tau, m, 1.0, 2.0, spec)?;
    let regret_variance = (mean_square_regret - mean_regret * mean_regret).max(0.0);
    let tail = thresholds
        .iter()
        .map(|&c| {
            Ok(TailProbability {
                threshold: c,
                prob_regret_exceeds: tail_probability(rule, exp, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskReport {
        mean_regret,
        regret_variance,
        mean_square_regret,
        welfare_mean: exp.tau.max(0.0) - mean_regret,
        welfare_sd: regret_variance.sqrt(),
        tail,
    })
}

/// `P(Reg > threshold)`.
///
/// Piecewise-constant rules sum segment probabilities and monotone rules
/// invert the rule at the crossing level. Other rules locate every crossing on
/// a fine grid over `mean ± 12` statistic sds and refine each by root finding.
pub fn tail_probability(
    rule: &TreatmentRule,
    exp: &GaussianExperiment,
    threshold: f64,
) -> Result<f64> {
    exp.validate()?;
    if !(threshold >= 0.0) {
        return Err(Error::Domain(format!(
            "tail threshold must be nonnegative, got {threshold}"
        )));
    }
    let tau = exp.tau;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let level = threshold / tau.abs();
    if level >= 1.0 {
        return Ok(0.0);
    }
    let m = exp.stat_mean();
    if let Some(jumps) = rule.jump_points() {
        let p = segment_expectation(rule, &jumps, m, 1.0, |d| {
            let q = if tau >= 0.0 { 1.0 - d } else { d };
            if q > level {
                1.0
            } else {
                0.0
            }
        });
        return Ok(p.clamp(0.0, 1.0));
    }
    let excess = |s: f64| shortfall(rule, tau, s) - level;
    if rule.is_monotone() {
        let (lo, hi) = (m - INVERSION_HALF_WIDTH, m + INVERSION_HALF_WIDTH);
        let (at_lo, at_hi) = (excess(lo) > 0.0, excess(hi) > 0.0);
        return Ok(match (at_lo, at_hi) {
            (true, true) => 1.0,
            (false, false) => 0.0,
            (true, false) => {
                let root = find_root(excess, lo, hi, 1e-13)?;
                std_normal_cdf(root - m)
            }
            (false, true) => {
                let root = find_root(excess, lo, hi, 1e-13)?;
                std_normal_cdf(m - root)
            }
        });
    }
    let lo = m - CROSSING_SCAN_HALF_WIDTH;
    let steps = (2.0 * CROSSING_SCAN_HALF_WIDTH / CROSSING_SCAN_STEP).round() as usize;
    let mut edges = vec![f64::NEG_INFINITY];
    let mut prev_s = lo;
    let mut prev = excess(lo);
    let first_positive = prev > 0.0;
    for i in 1..=steps {
        let s = lo + i as f64 * CROSSING_SCAN_STEP;
        let cur = excess(s);
        if (prev > 0.0) != (cur > 0.0) {
            edges.push(find_root(excess, prev_s, s, 1e-13)?);
        }
        prev_s = s;
        prev = cur;
    }
    edges.push(f64::INFINITY);
    let p: f64 = edges
        .windows(2)
        .enumerate()
        .filter(|(k, _)| (k % 2 == 0) == first_positive)
        .map(|(_, w)| std_normal_interval(w[0] - m, w[1] - m))
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Risk value of one criterion at state `tau`.
pub fn risk_value(
    rule: &TreatmentRule,
    exp: &GaussianExperiment,
    criterion: RiskCriterion,
    spec: &QuadratureSpec,
) -> Result<f64> {
    exp.validate()?;
    let power = match criterion {
        RiskCriterion::MeanRegret => 1.0,
        RiskCriterion::MeanSquareRegret => 2.0,
    };
    regret_moment(rule, exp.tau, exp.stat_mean(), 1.0, power, spec)
}

/// Supremum over states of the chosen risk functional.
///
/// States are searched on `τ√n/σ ∈ [−8, 8]`, or `[0, 8]` when the rule is
/// antisymmetric (then the risk is even in `τ`): a 0.01 scan followed by local
/// refinement around the best grid point. Ties favor `τ ≥ 0`.
pub fn worst_case(
    rule: &TreatmentRule,
    sigma: f64,
    n: u64,
    criterion: RiskCriterion,
    spec: &QuadratureSpec,
) -> Result<WorstCase> {
    rule.validate()?;
    GaussianExperiment::new(0.0, sigma, n)?;
    let se = sigma / (n as f64).sqrt();
    let objective = |h: f64| {
        risk_value(
            rule,
            &GaussianExperiment {
                tau: h * se,
                sigma,
                n,
            },
            criterion,
            spec,
        )
    };

    let half_steps = (WORST_CASE_BRACKET / SCAN_STEP).round() as i64;
    let mut offsets: Vec<i64> = (0..=half_steps).collect();
    if !rule.is_antisymmetric() {
        offsets.extend((1..=half_steps).map(|k| -k));
    }
    let values = offsets
        .par_iter()
        .map(|&k| objective(k as f64 * SCAN_STEP))
        .collect::<Result<Vec<f64>>>()?;
    let (best_idx, _) =
        values
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    let h0 = offsets[best_idx] as f64 * SCAN_STEP;
    let lower = if rule.is_antisymmetric() {
        0.0
    } else {
        -WORST_CASE_BRACKET
    };
    let lo = (h0 - SCAN_STEP).max(lower);
    let hi = (h0 + SCAN_STEP).min(WORST_CASE_BRACKET);
    let failed = std::cell::Cell::new(None);
    let (mut h, mut sup) = maximize_scalar(
        |x| match objective(x) {
            Ok(v) => v,
            Err(e) => {
                failed.set(Some(e));
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        REFINE_TOL,
    );
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    if values[best_idx] > sup {
        h = h0;
        sup = values[best_idx];
    }
    let saturated = (h.abs() - WORST_CASE_BRACKET).abs() <= SCAN_STEP;
    Ok(WorstCase {
        sup,
        argsup_tau: h * se,
        saturated,
    })
}

/// Worst-case mean square regret with the default quadrature.
pub fn worst_case_msr(rule: &TreatmentRule, sigma: f64, n: u64) -> Result<WorstCase> {
    worst_case(
        rule,
        sigma,
        n,
        RiskCriterion::MeanSquareRegret,
        &QuadratureSpec::default(),
    )
}

/// Worst-case mean regret with the default quadrature.
pub fn worst_case_mean_regret(rule: &TreatmentRule, sigma: f64, n: u64) -> Result<WorstCase> {
    worst_case(
        rule,
        sigma,
        n,
        RiskCriterion::MeanRegret,
        &QuadratureSpec::default(),
    )
}

/// Prior-weighted mean square regret.
pub fn bayes_msr(
    rule: &TreatmentRule,
    prior: &DiscretePrior,
    sigma: f64,
    n: u64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    prior
        .support()
        .iter()
        .map(|a| {
            let exp = GaussianExperiment::new(a.tau, sigma, n)?;
            Ok(a.weight * risk_value(rule, &exp, RiskCriterion::MeanSquareRegret, spec)?)
        })
        .sum()
}

/// Exact risk at each grid state.
pub fn risk_curve(
    rule: &TreatmentRule,
    tau_grid: &[f64],
    sigma: f64,
    n: u64,
    spec: &QuadratureSpec,
) -> Result<Vec<(f64, RiskReport)>> {
    tau_grid
        .par_iter()
        .map(|&tau| {
            Ok((
                tau,
                exact_risk(rule, &GaussianExperiment::new(tau, sigma, n)?, spec)?,
            ))
        })
        .collect()
}

/// Writes a risk curve as CSV.
pub fn write_risk_curve_csv<W: Write>(out: W, curve: &[(f64, RiskReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
    w.write_record([
        "tau",
        "mean_regret",
        "regret_sd",
        "msr",
        "welfare_mean",
        "welfare_sd",
    ])
    .map_err(io)?;
    for (tau, r) in curve {
        w.write_record([
            tau.to_string(),
            r.mean_regret.to_string(),
            r.regret_sd().to_string(),
            r.mean_square_regret.to_string(),
            r.welfare_mean.to_string(),
            r.welfare_sd.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing CSV: {e}")))
}

/// Monte Carlo risk summary.
pub fn simulate(
    rule: &TreatmentRule,
    exp: &GaussianExperiment,
    replications: u64,
    seed: RngSeed,
) -> Result<SimulationSummary> {
    simulate_with_tails(rule, exp, replications, seed, &[])
}

/// [`simulate`] with empirical tail probabilities.
///
/// Replication `i` draws from `seed.substream(i)`, so the output does not
/// depend on the number of threads.
pub fn simulate_with_tails(
    rule: &TreatmentRule,
    exp: &GaussianExperiment,
    replications: u64,
    seed: RngSeed,
    thresholds: &[f64],
) -> Result<SimulationSummary> {
    exp.validate()?;
    rule.validate()?;
    if replications < 2 {
        return Err(Error::Domain(
            "simulation needs at least 2 replications".into(),
        ));
    }
    let tau = exp.tau;
    let se = exp.standard_error();
    let root_n = (exp.n as f64).sqrt();
    let regrets: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut seed.substream(i));
            let ybar = tau + se * z;
            regret(rule.evaluate(root_n * ybar / exp.sigma), tau)
        })
        .collect();

    let r = replications as f64;
    let mean_of = |f: &dyn Fn(f64) -> f64| -> Estimate {
        let mut sum = 0.0;
        for &x in &regrets {
            sum += f(x);
        }
        let mean = sum / r;
        let mut ss = 0.0;
        for &x in &regrets {
            let d = f(x) - mean;
            ss += d * d;
        }
        Estimate {
            value: mean,
            std_error: (ss / (r - 1.0)).sqrt() / r.sqrt(),
        }
    };
    let mean_regret = mean_of(&|x| x);
    let mean_square_regret = mean_of(&|x| x * x);
    let mu = mean_regret.value;
    let centered = mean_of(&|x| (x - mu) * (x - mu));
    let variance = centered.value * r / (r - 1.0);
    let regret_variance = Estimate {
        value: variance,
        std_error: centered.std_error * r / (r - 1.0),
    };
    let sd = variance.sqrt();
    let regret_sd = Estimate {
        value: sd,
        std_error: if sd > 0.0 {
            regret_variance.std_error / (2.0 * sd)
        } else {
            0.0
        },
    };
    let welfare_mean = Estimate {
        value: tau.max(0.0) - mean_regret.value,
        std_error: mean_regret.std_error,
    };
    let tail = thresholds
        .iter()
        .map(|&c| TailEstimate {
            threshold: c,
            prob_regret_exceeds: mean_of(&|x| if x > c { 1.0 } else { 0.0 }),
        })
        .collect();
    Ok(SimulationSummary {
        replications,
        seed,
        mean_regret,
        regret_variance,
        regret_sd,
        mean_square_regret,
        welfare_mean,
        welfare_sd: regret_sd,
        tail,
    })
}
