//! Sample sizes for worst-case regret targets.
//!
//! Worst-case risks of rules on the standardized statistic scale exactly as
//! `σ²/n` (mean square regret) or `σ/√n` (mean regret), so every calculation
//! reduces to a unit constant computed once by [`crate::risk::worst_case`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::std_normal_quantile;
use crate::risk::{worst_case_mean_regret, worst_case_msr};
use crate::rules::TreatmentRule;

/// Relative slack absorbing rounding in `ceil` of an exact-integer ratio.
const CEIL_SLACK: f64 = 1e-12;

fn ceil_count(x: f64) -> Result<u64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain(format!("sample size is not finite: {x}")));
    }
    Ok(((x * (1.0 - CEIL_SLACK)).ceil() as u64).max(1))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Smallest `n` with `(σ²/n)·worst_msr_unit ≤ ε²`.
pub fn n_for_msr_target(sigma: f64, epsilon: f64, worst_msr_unit: f64) -> Result<u64> {
    positive("sigma", sigma)?;
    positive("epsilon", epsilon)?;
    positive("unit worst-case MSR", worst_msr_unit)?;
    ceil_count(sigma * sigma * worst_msr_unit / (epsilon * epsilon))
}

/// Unit worst-case constants of the empirical success rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsConstants {
    /// `sup_τ τ·Φ(−τ)`.
    pub worst_mean_regret: f64,
    /// `sup_τ τ²·Φ(−τ)`.
    pub worst_msr: f64,
}

impl EsConstants {
    pub fn compute() -> Result<Self> {
        let es = TreatmentRule::EmpiricalSuccess;
        Ok(Self {
            worst_mean_regret: worst_case_mean_regret(&es, 1.0, 1)?.sup,
            worst_msr: worst_case_msr(&es, 1.0, 1)?.sup,
        })
    }

    /// Coefficient of `σ²/ε²` in the ES sample size.
    pub fn sample_constant(&self) -> f64 {
        self.worst_mean_regret * self.worst_mean_regret
    }
}

/// Smallest `n` with worst-case ES mean regret `≤ ε`.
pub fn es_epsilon_optimal_n(sigma: f64, epsilon: f64) -> Result<u64> {
    es_n_with(&EsConstants::compute()?, sigma, epsilon)
}

fn es_n_with(c: &EsConstants, sigma: f64, epsilon: f64) -> Result<u64> {
    positive("sigma", sigma)?;
    positive("epsilon", epsilon)?;
    ceil_count(c.sample_constant() * sigma * sigma / (epsilon * epsilon))
}

/// Sample size of a one-sided size-`alpha` test with power `beta` at `tau_alt`.
pub fn ht_power_n(sigma: f64, alpha: f64, beta: f64, tau_alt: f64) -> Result<u64> {
    positive("sigma", sigma)?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 0.5), got {alpha}"
        )));
    }
    if !(0.5..1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "power must lie in [0.5, 1), got {beta}"
        )));
    }
    if tau_alt == 0.0 || !tau_alt.is_finite() {
        return Err(Error::Domain(format!(
            "alternative must be finite and nonzero, got {tau_alt}"
        )));
    }
    let gap = std_normal_quantile(1.0 - alpha)? - std_normal_quantile(1.0 - beta)?;
    ceil_count(sigma * sigma / (tau_alt * tau_alt) * gap * gap)
}

/// ES versus a competing rule at equal worst-case mean square regret.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsComparison {
    pub sigma: f64,
    pub epsilon: f64,
    pub es: EsConstants,
    pub rule_worst_msr_unit: f64,
    pub n_es: u64,
    /// `(σ²/n_ES)·sup_τ τ²Φ(−τ)`.
    pub es_worst_msr_at_n_es: f64,
    /// Smallest `n` at which the rule's worst MSR is at most `es_worst_msr_at_n_es`.
    pub n_star: u64,
    /// `n_ES / n*` with both sizes rounded up.
    pub ratio: f64,
    /// Coefficient of `σ²/ε²` in `n_ES`.
    pub n_es_constant: f64,
    /// Coefficient of `σ²/ε²` in `n*` before rounding.
    pub n_star_constant: f64,
    /// Ratio of the two coefficients; does not depend on `σ` or `ε`.
    pub constant_ratio: f64,
}

pub fn compare_vs_es(sigma: f64, epsilon: f64, rule: &TreatmentRule) -> Result<EsComparison> {
    let es = EsConstants::compute()?;
    let unit = worst_case_msr(rule, 1.0, 1)?.sup;
    compare_vs_es_with(&es, unit, sigma, epsilon)
}

/// [`compare_vs_es`] from precomputed unit constants.
pub fn compare_vs_es_with(
    es: &EsConstants,
    rule_worst_msr_unit: f64,
    sigma: f64,
    epsilon: f64,
) -> Result<EsComparison> {
    positive("unit worst-case MSR", rule_worst_msr_unit)?;
    let n_es = es_n_with(es, sigma, epsilon)?;
    let es_worst_msr_at_n_es = sigma * sigma / n_es as f64 * es.worst_msr;
    let n_star = ceil_count(sigma * sigma * rule_worst_msr_unit / es_worst_msr_at_n_es)?;
    let n_es_constant = es.sample_constant();
    let n_star_constant = n_es_constant * rule_worst_msr_unit / es.worst_msr;
    Ok(EsComparison {
        sigma,
        epsilon,
        es: *es,
        rule_worst_msr_unit,
        n_es,
        es_worst_msr_at_n_es,
        n_star,
        ratio: n_es as f64 / n_star as f64,
        n_es_constant,
        n_star_constant,
        constant_ratio: n_es_constant / n_star_constant,
    })
}

/// HT versus a competing rule at the HT power-based sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtComparison {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_alt: f64,
    pub n_ht: u64,
    /// `sup_τ` of the test rule's MSR at `σ = n = 1`, over both signs of `τ`.
    pub ht_worst_msr_unit: f64,
    pub rule_worst_msr_unit: f64,
    pub ht_worst_msr_at_n_ht: f64,
    pub rule_worst_msr_at_n_ht: f64,
    /// Rule worst MSR as a fraction of the test's at the same `n`.
    pub msr_ratio: f64,
    /// Factor by which the test needs more observations for equal worst MSR.
    pub sample_multiple: f64,
    /// Smallest `n` at which the rule matches the test's worst MSR at `n_ht`.
    pub n_rule_matching: u64,
}

pub fn compare_vs_ht(
    sigma: f64,
    alpha: f64,
    beta: f64,
    tau_alt: f64,
    rule: &TreatmentRule,
) -> Result<HtComparison> {
    let n_ht = ht_power_n(sigma, alpha, beta, tau_alt)?;
    let ht_unit = worst_case_msr(&TreatmentRule::HypothesisTest { alpha }, 1.0, 1)?.sup;
    let rule_unit = worst_case_msr(rule, 1.0, 1)?.sup;
    let scale = sigma * sigma / n_ht as f64;
    Ok(HtComparison {
        sigma,
        alpha,
        beta,
        tau_alt,
        n_ht,
        ht_worst_msr_unit: ht_unit,
        rule_worst_msr_unit: rule_unit,
        ht_worst_msr_at_n_ht: scale * ht_unit,
        rule_worst_msr_at_n_ht: scale * rule_unit,
        msr_ratio: rule_unit / ht_unit,
        sample_multiple: ht_unit / rule_unit,
        n_rule_matching: ceil_count(n_ht as f64 * rule_unit / ht_unit)?,
    })
}

/// Which requirement a plan satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum PlanCriterion {
    WorstMsrTarget { epsilon: f64 },
    EsEpsilonOptimal { epsilon: f64 },
    HtPower { alpha: f64, beta: f64, tau_alt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanComparison {
    pub other_rule_n: u64,
    pub ratio: f64,
}

/// A sample size together with the worst-case MSR it buys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizePlan {
    #[serde(flatten)]
    pub criterion: PlanCriterion,
    pub sigma: f64,
    pub n_required: u64,
    pub achieved_worst_msr: f64,
    pub comparison: Option<PlanComparison>,
}

/// Smallest `n` at which `rule` has root worst-case MSR at most `ε`.
pub fn plan_msr_target(rule: &TreatmentRule, sigma: f64, epsilon: f64) -> Result<SampleSizePlan> {
    let unit = worst_case_msr(rule, 1.0, 1)?.sup;
    let n = n_for_msr_target(sigma, epsilon, unit)?;
    Ok(SampleSizePlan {
        criterion: PlanCriterion::WorstMsrTarget { epsilon },
        sigma,
        n_required: n,
        achieved_worst_msr: sigma * sigma / n as f64 * unit,
        comparison: None,
    })
}

/// ES sample size, compared against `rule` at equal worst-case MSR.
pub fn plan_es(rule: &TreatmentRule, sigma: f64, epsilon: f64) -> Result<SampleSizePlan> {
    let c = compare_vs_es(sigma, epsilon, rule)?;
    Ok(SampleSizePlan {
        criterion: PlanCriterion::EsEpsilonOptimal { epsilon },
        sigma,
        n_required: c.n_es,
        achieved_worst_msr: c.es_worst_msr_at_n_es,
        comparison: Some(PlanComparison {
            other_rule_n: c.n_star,
            ratio: c.ratio,
        }),
    })
}

/// HT sample size, compared against `rule` at equal worst-case MSR.
pub fn plan_ht(
    rule: &TreatmentRule,
    sigma: f64,
    alpha: f64,
    beta: f64,
    tau_alt: f64,
) -> Result<SampleSizePlan> {
    let c = compare_vs_ht(sigma, alpha, beta, tau_alt, rule)?;
    Ok(SampleSizePlan {
        criterion: PlanCriterion::HtPower {
            alpha,
            beta,
            tau_alt,
        },
        sigma,
        n_required: c.n_ht,
        achieved_worst_msr: c.ht_worst_msr_at_n_ht,
        comparison: Some(PlanComparison {
            other_rule_n: c.n_rule_matching,
            ratio: c.sample_multiple,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TAU_STAR;

    #[test]
    fn msr_target_examples() {
        assert_eq!(n_for_msr_target(1.0, 0.01, 0.1199).unwrap(), 1199);
        assert_eq!(n_for_msr_target(1.0, 1.0, 0.1199).unwrap(), 1);
        assert_eq!(n_for_msr_target(2.0, 0.01, 0.1199).unwrap(), 4796);
        assert!(n_for_msr_target(1.0, 0.0, 0.1199).is_err());
    }

    #[test]
    fn msr_target_is_minimal_and_monotone() {
        let unit = 0.119_878_99;
        let mut prev = u64::MAX;
        for i in 1..200 {
            let eps = 0.002 * i as f64;
            let n = n_for_msr_target(1.3, eps, unit).unwrap();
            assert!(n <= prev);
            prev = n;
            let achieved = |n: u64| 1.69 / n as f64 * unit;
            assert!(achieved(n) <= eps * eps * (1.0 + 1e-10));
            if n > 1 {
                assert!(achieved(n - 1) > eps * eps);
            }
        }
        assert!(
            n_for_msr_target(2.0, 0.05, unit).unwrap()
                >= n_for_msr_target(1.0, 0.05, unit).unwrap()
        );
    }

    #[test]
    fn es_examples() {
        let c = EsConstants::compute().unwrap();
        assert!((c.sample_constant() - 0.0289).abs() < 2e-4);
        assert_eq!(es_n_with(&c, 1.0, 0.01).unwrap(), 289);
        assert_eq!(es_n_with(&c, 1.0, 0.17).unwrap(), 1);
        assert_eq!(es_n_with(&c, 3.0, 0.01).unwrap(), 2601);
    }

    #[test]
    fn es_comparison() {
        let es = EsConstants::compute().unwrap();
        let unit = worst_case_msr(&TreatmentRule::minimax(TAU_STAR), 1.0, 1)
            .unwrap()
            .sup;
        let c = compare_vs_es_with(&es, unit, 1.0, 0.01).unwrap();
        assert_eq!(c.n_es, 289);
        assert!((c.n_star as i64 - 209).abs() <= 1);
        assert!((1.35..=1.42).contains(&c.ratio));
        assert!((c.n_star_constant - 0.0209).abs() < 2e-4);
        assert!((c.constant_ratio - 0.0289 / 0.0209).abs() < 5e-3);
        // The constants do not depend on σ or ε; rounded sizes only nearly so.
        for (sigma, eps) in [(1.0, 0.005), (2.0, 0.01), (1.0, 0.05)] {
            let other = compare_vs_es_with(&es, unit, sigma, eps).unwrap();
            assert_eq!(other.constant_ratio, c.constant_ratio);
        }
        let fine = compare_vs_es_with(&es, unit, 1.0, 0.005).unwrap();
        assert!((fine.ratio - c.constant_ratio).abs() < 0.01);
    }

    #[test]
    fn ht_examples() {
        assert_eq!(ht_power_n(1.0, 0.05, 0.8, 0.5).unwrap(), 25);
        assert_eq!(ht_power_n(1.0, 0.05, 0.5, 1.0).unwrap(), 3);
        assert_eq!(ht_power_n(2.0, 0.05, 0.5, 1.0).unwrap(), 11);
        let n1 = 1.644_853_626_951_472_2f64.powi(2);
        assert_eq!(
            ht_power_n(2.0, 0.05, 0.5, 1.0).unwrap(),
            (4.0 * n1).ceil() as u64
        );
        assert!(ht_power_n(1.0, 0.05, 0.8, 0.0).is_err());
        assert!(ht_power_n(1.0, 0.6, 0.8, 1.0).is_err());
    }

    #[test]
    fn ht_positive_side_dominates() {
        // For α < ½ the test rarely treats, so τ > 0 states drive the worst case:
        // sup_b b²Φ(z − b) exceeds sup_b b²Φ(−z − b) because z > 0.
        let rule = TreatmentRule::HypothesisTest { alpha: 0.05 };
        let wc = worst_case_msr(&rule, 1.0, 1).unwrap();
        assert!(wc.argsup_tau > 0.0);
        assert!((wc.argsup_tau - 1.969_57).abs() < 1e-3);
        assert!((wc.sup - 1.4458).abs() < 1e-3);
    }

    #[test]
    fn ht_comparison() {
        let c = compare_vs_ht(1.0, 0.05, 0.8, 0.5, &TreatmentRule::minimax(TAU_STAR)).unwrap();
        assert_eq!(c.n_ht, 25);
        assert!((c.ht_worst_msr_unit - 1.4458).abs() < 2e-3);
        assert!((c.msr_ratio - 0.083).abs() < 2e-3);
        assert!((c.sample_multiple - 12.06).abs() < 0.1);
        assert_eq!(c.n_rule_matching, 3);
    }

    #[test]
    fn plans_serialize() {
        let rule = TreatmentRule::minimax(TAU_STAR);
        let p = plan_msr_target(&rule, 1.0, 0.01).unwrap();
        assert_eq!(p.n_required, 1199);
        assert!(p.achieved_worst_msr <= 1e-4);
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains(r#""criterion":"worst_msr_target""#));
        let back: SampleSizePlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let e = plan_es(&rule, 1.0, 0.01).unwrap();
        assert_eq!(e.n_required, 289);
        let h = plan_ht(&rule, 1.0, 0.05, 0.8, 0.5).unwrap();
        assert_eq!(h.n_required, 25);
        let back: SampleSizePlan =
            serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }
}
