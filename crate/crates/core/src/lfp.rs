//! Least-favorable two-point prior for mean square regret.
//!
//! Under the prior putting ½ on each of ±τ, the Bayes rule given
//! `Ȳ ~ N(τ, 1)` is the logistic `e^{2τȲ}/(e^{2τȲ}+1)` and its Bayes risk is
//!
//! ```text
//!   B(τ) = ½ τ² E_τ[1/(e^{2τȲ}+1)]
//! ```
//!
//! The least-favorable location `τ*` maximizes `B`. The same `τ*` maximizes the
//! frequentist risk of that rule at `τ`, `F(τ) = τ² E_τ[(1/(e^{2τȲ}+1))²]`, and in
//! fact `B ≡ F`. The minimax rule is the logistic rule at `τ*`, certified by
//! checking that its worst-case risk equals its Bayes risk.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_expectation, logistic, maximize_scalar, QuadratureSpec};
use crate::risk::{bayes_msr, risk_value, worst_case, GaussianExperiment, RiskCriterion};
use crate::rules::{DiscretePrior, TreatmentRule};

const SCAN_LO: f64 = 0.5;
const SCAN_HI: f64 = 2.5;
const SCAN_STEP: f64 = 1e-3;
/// Closest the two programs' maximizers can be required to agree: both
/// objectives are flat at the peak, so double rounding limits the argmax to
/// roughly `√ε_mach` relative precision.
const ARGMAX_AGREEMENT_FLOOR: f64 = 1e-6;

pub const SADDLE_GAP_TOL: f64 = 1e-6;
pub const SADDLE_ARGSUP_TOL: f64 = 1e-4;
pub const SADDLE_EXCESS_TOL: f64 = 1e-8;
pub const SADDLE_GRID_MAX: f64 = 4.0;
pub const SADDLE_GRID_STEP: f64 = 0.02;

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "tau must be nonnegative and finite, got {tau}"
        )))
    }
}

/// `½ τ² E[1/(e^{2τY}+1)]` with `Y ~ N(τ, 1)`.
pub fn bayes_objective(tau: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let e = gaussian_expectation(|y| logistic(-2.0 * tau * y), tau, 1.0, spec)?;
    Ok(0.5 * tau * tau * e)
}

/// `τ² E[(1/(e^{2τY}+1))²]` with `Y ~ N(τ, 1)`.
pub fn frequentist_objective(tau: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let e = gaussian_expectation(|y| logistic(-2.0 * tau * y).powi(2), tau, 1.0, spec)?;
    Ok(tau * tau * e)
}

/// Grid scan on `[0.5, 2.5]` followed by local refinement.
fn argmax_on_scan<F>(objective: F, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let steps = ((SCAN_HI - SCAN_LO) / SCAN_STEP).round() as usize;
    let values = (0..=steps)
        .into_par_iter()
        .map(|i| objective(SCAN_LO + i as f64 * SCAN_STEP))
        .collect::<Result<Vec<f64>>>()?;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });
    let centre = SCAN_LO + best as f64 * SCAN_STEP;
    let failed = std::cell::Cell::new(None);
    let (x, v) = maximize_scalar(
        |t| match objective(t) {
            Ok(v) => v,
            Err(e) => {
                failed.set(Some(e));
                f64::NEG_INFINITY
            }
        },
        (centre - SCAN_STEP).max(SCAN_LO),
        (centre + SCAN_STEP).min(SCAN_HI),
        tol,
    );
    match failed.into_inner() {
        Some(e) => Err(e),
        None => Ok((x, v)),
    }
}

/// Location of the least-favorable two-point prior.
///
/// Maximizes the Bayes objective and cross-checks against the maximizer of the
/// frequentist objective, which must agree within `max(10·tol, 1e-6)`.
pub fn solve_tau_star(spec: &QuadratureSpec, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (tau_b, _) = argmax_on_scan(|t| bayes_objective(t, spec), tol)?;
    let (tau_f, _) = argmax_on_scan(|t| frequentist_objective(t, spec), tol)?;
    let allowed = (10.0 * tol).max(ARGMAX_AGREEMENT_FLOOR);
    if (tau_b - tau_f).abs() > allowed {
        return Err(Error::Convergence(format!(
            "Bayes and frequentist maximizers disagree: {tau_b} vs {tau_f}"
        )));
    }
    Ok(tau_b)
}

/// Maximizers and maxima of both objectives, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramComparison {
    pub argmax_bayes: f64,
    pub max_bayes: f64,
    pub argmax_frequentist: f64,
    pub max_frequentist: f64,
}

pub fn compare_programs(spec: &QuadratureSpec, tol: f64) -> Result<ProgramComparison> {
    let (argmax_bayes, max_bayes) = argmax_on_scan(|t| bayes_objective(t, spec), tol)?;
    let (argmax_frequentist, max_frequentist) =
        argmax_on_scan(|t| frequentist_objective(t, spec), tol)?;
    Ok(ProgramComparison {
        argmax_bayes,
        max_bayes,
        argmax_frequentist,
        max_frequentist,
    })
}

/// The solved `τ*` together with both programs' optima and the minimax value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStarReport {
    pub tau_star: f64,
    pub tol: f64,
    pub quadrature_nodes: usize,
    pub worst_case_msr: f64,
    pub programs: ProgramComparison,
}

/// Solves for `τ*` and records the evidence behind it.
pub fn tau_star_report(spec: &QuadratureSpec, tol: f64) -> Result<TauStarReport> {
    let tau_star = solve_tau_star(spec, tol)?;
    let programs = compare_programs(spec, tol)?;
    let worst = worst_case(
        &TreatmentRule::minimax(tau_star),
        1.0,
        1,
        RiskCriterion::MeanSquareRegret,
        spec,
    )?;
    Ok(TauStarReport {
        tau_star,
        tol,
        quadrature_nodes: spec.node_count(),
        worst_case_msr: worst.sup,
        programs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub tau: f64,
    pub bayes_objective: f64,
    pub frequentist_risk: f64,
}

/// Evidence that the logistic rule at `tau_star` is minimax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleCertificate {
    pub tau_star: f64,
    pub bayes_risk_at_lfp: f64,
    pub worst_case_risk: f64,
    pub argsup_tau: f64,
    pub objective_gap: f64,
    /// Largest amount by which the rule's risk on the sample grid exceeds its
    /// risk at `tau_star`.
    pub max_excess: f64,
    pub curve_samples: Vec<CurveSample>,
}

impl SaddleCertificate {
    pub fn is_valid(&self) -> bool {
        self.objective_gap <= SADDLE_GAP_TOL
            && (self.argsup_tau - self.tau_star).abs() <= SADDLE_ARGSUP_TOL
            && self.max_excess <= SADDLE_EXCESS_TOL
    }
}

/// Checks the saddle condition at `tau_star` and samples both curves on
/// `τ ∈ [0, 4]` at step 0.02.
pub fn verify_saddle(tau_star: f64, spec: &QuadratureSpec) -> Result<SaddleCertificate> {
    let cert = saddle_certificate(tau_star, spec)?;
    if cert.is_valid() {
        Ok(cert)
    } else {
        Err(Error::SaddleViolation {
            tau_star,
            gap: cert.objective_gap,
            argsup_tau: cert.argsup_tau,
            max_excess: cert.max_excess,
        })
    }
}

/// The certificate without the validity check.
pub fn saddle_certificate(tau_star: f64, spec: &QuadratureSpec) -> Result<SaddleCertificate> {
    if !(tau_star > 0.0 && tau_star.is_finite()) {
        return Err(Error::Domain(format!(
            "tau_star must be positive, got {tau_star}"
        )));
    }
    let rule = TreatmentRule::minimax(tau_star);
    let prior = DiscretePrior::symmetric_two_point(tau_star)?;
    let bayes_risk_at_lfp = bayes_msr(&rule, &prior, 1.0, 1, spec)?;
    let wc = worst_case(&rule, 1.0, 1, RiskCriterion::MeanSquareRegret, spec)?;
    let risk_at = |tau: f64| {
        risk_value(
            &rule,
            &GaussianExperiment::unit(tau),
            RiskCriterion::MeanSquareRegret,
            spec,
        )
    };
    let at_star = risk_at(tau_star)?;
    let steps = (SADDLE_GRID_MAX / SADDLE_GRID_STEP).round() as usize;
    let curve_samples = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let tau = i as f64 * SADDLE_GRID_STEP;
            Ok(CurveSample {
                tau,
                bayes_objective: bayes_objective(tau, spec)?,
                frequentist_risk: risk_at(tau)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_excess = curve_samples
        .iter()
        .map(|c| c.frequentist_risk - at_star)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SaddleCertificate {
        tau_star,
        bayes_risk_at_lfp,
        worst_case_risk: wc.sup,
        argsup_tau: wc.argsup_tau,
        objective_gap: (bayes_risk_at_lfp - wc.sup).abs(),
        max_excess,
        curve_samples,
    })
}

/// Writes the curve samples as CSV.
pub fn write_saddle_curve_csv<W: Write>(out: W, samples: &[CurveSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
    w.write_record(["tau", "bayes_objective", "frequentist_risk"])
        .map_err(io)?;
    for c in samples {
        w.write_record([
            c.tau.to_string(),
            c.bayes_objective.to_string(),
            c.frequentist_risk.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing CSV: {e}")))
}
