//! Treatment rules: maps from a scalar statistic to the fraction of the
//! population that receives treatment.
//!
//! Every rule reads a pre-standardized statistic. In a Gaussian experiment
//! with `n` draws and known outcome sd `σ` this is `√n·Ȳ/σ`; in the regression
//! application it is `√n·τ̂` with `scale = σ̂_τ`, i.e. the t-statistic.
//!
//! The Bayes rule for a finitely supported prior is obtained by solving the
//! first-order condition
//!
//! ```text
//!   Σ_i w̃_i · τ_i · g′(τ_i (1{τ_i ≥ 0} − δ)) = 0,     g(r) = r^α,
//! ```
//!
//! where `w̃_i` are the posterior weights of the support points. Its left side
//! is strictly decreasing in `δ`, so the root in `(0, 1)` is unique whenever the
//! posterior charges both signs of `τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{find_root, logistic, std_normal_cdf, std_normal_pdf, std_normal_quantile};

const FOC_TOL: f64 = 1e-15;

/// One support point of a [`DiscretePrior`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorAtom {
    pub tau: f64,
    pub weight: f64,
}

/// Finitely supported prior over the average treatment effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct DiscretePrior {
    support: Vec<PriorAtom>,
}

#[derive(Serialize, Deserialize)]
struct RawPrior {
    support: Vec<PriorAtom>,
}

impl TryFrom<RawPrior> for DiscretePrior {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Self> {
        DiscretePrior::new(raw.support)
    }
}

impl From<DiscretePrior> for RawPrior {
    fn from(p: DiscretePrior) -> Self {
        RawPrior { support: p.support }
    }
}

impl DiscretePrior {
    /// Weights must be positive and sum to one (to 1e-9); points must be distinct.
    pub fn new(support: Vec<PriorAtom>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Domain(
                "prior needs at least one support point".into(),
            ));
        }
        for a in &support {
            if !a.tau.is_finite() || !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::Domain(format!(
                    "prior atom ({}, {}) needs finite tau and positive weight",
                    a.tau, a.weight
                )));
            }
        }
        let total: f64 = support.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "prior weights sum to {total}, not 1"
            )));
        }
        for (i, a) in support.iter().enumerate() {
            if support[..i].iter().any(|b| b.tau == a.tau) {
                return Err(Error::Domain(format!("duplicate support point {}", a.tau)));
            }
        }
        Ok(Self { support })
    }

    /// Rescales positive weights to sum to one.
    pub fn from_unnormalized(points: &[(f64, f64)]) -> Result<Self> {
        let total: f64 = points.iter().map(|p| p.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(
                "prior weights must have positive finite total".into(),
            ));
        }
        Self::new(
            points
                .iter()
                .map(|&(tau, w)| PriorAtom {
                    tau,
                    weight: w / total,
                })
                .collect(),
        )
    }

    /// The prior putting mass ½ on each of ±a.
    pub fn symmetric_two_point(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!(
                "two-point prior needs a > 0, got {a}"
            )));
        }
        Self::new(vec![
            PriorAtom {
                tau: a,
                weight: 0.5,
            },
            PriorAtom {
                tau: -a,
                weight: 0.5,
            },
        ])
    }

    /// Parses `"t1:w1,t2:w2,..."`; weights are normalized.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (t, w) = item
                .split_once(':')
                .ok_or_else(|| Error::Input(format!("prior entry '{item}' is not tau:weight")))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad prior location '{t}'")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad prior weight '{w}'")))?;
            points.push((t, w));
        }
        Self::from_unnormalized(&points)
    }

    pub fn support(&self) -> &[PriorAtom] {
        &self.support
    }

    /// Positive mass on both τ > 0 and τ < 0.
    pub fn is_two_sided(&self) -> bool {
        self.support.iter().any(|a| a.tau > 0.0) && self.support.iter().any(|a| a.tau < 0.0)
    }

    /// Posterior weights after observing `stat ~ N(τ, noise_sd²)`.
    pub fn posterior_weights(&self, noise_sd: f64, stat: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .support
            .iter()
            .map(|a| {
                let z = (stat - a.tau) / noise_sd;
                a.weight.ln() - 0.5 * z * z
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Ψ(x) = φ(x) / (Φ(x)(1 + x²)).
pub fn psi(x: f64) -> f64 {
    std_normal_pdf(x) / (std_normal_cdf(x) * (1.0 + x * x))
}

/// A treatment rule. Serialized as `{"kind": ..., ...params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreatmentRule {
    /// Treat everyone iff the statistic is nonnegative.
    EmpiricalSuccess,
    /// Treat everyone iff the statistic is at least `t`.
    Threshold { t: f64 },
    /// One-sided size-`alpha` test on the standardized statistic.
    HypothesisTest { alpha: f64 },
    /// Logistic rule `e^{2τ*s/scale} / (e^{2τ*s/scale} + 1)`.
    MinimaxMsr { tau_star: f64, scale: f64 },
    /// Flat-prior Bayes rule `Φ(u)[1 + uΨ(u)]`, `u = s/scale`.
    BayesFlatMsr { scale: f64 },
    /// Flat-prior posterior probability of a nonnegative effect, `Φ(s/scale)`.
    PosteriorMatchFlat { scale: f64 },
    /// `(1 − λ)·base + λ·(1 − base)`.
    ComplementMix {
        base: Box<TreatmentRule>,
        lambda: f64,
    },
    /// Bayes rule for `g(r) = r^alpha_g` under a finitely supported prior.
    DiscretePriorBayes {
        prior: DiscretePrior,
        alpha_g: f64,
        noise_sd: f64,
    },
}

impl TreatmentRule {
    pub fn minimax(tau_star: f64) -> Self {
        TreatmentRule::MinimaxMsr {
            tau_star,
            scale: 1.0,
        }
    }

    pub fn complement_mix(base: TreatmentRule, lambda: f64) -> Self {
        TreatmentRule::ComplementMix {
            base: Box::new(base),
            lambda,
        }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match self {
            TreatmentRule::EmpiricalSuccess => Ok(()),
            TreatmentRule::Threshold { t } if !t.is_finite() => bad(format!("threshold {t}")),
            TreatmentRule::Threshold { .. } => Ok(()),
            TreatmentRule::HypothesisTest { alpha } if !(*alpha > 0.0 && *alpha < 0.5) => {
                bad(format!("test size must lie in (0, 0.5), got {alpha}"))
            }
            TreatmentRule::HypothesisTest { .. } => Ok(()),
            TreatmentRule::MinimaxMsr { tau_star, scale } => {
                if !(*tau_star > 0.0 && tau_star.is_finite()) {
                    return bad(format!("tau_star must be positive, got {tau_star}"));
                }
                positive_scale(*scale)
            }
            TreatmentRule::BayesFlatMsr { scale } | TreatmentRule::PosteriorMatchFlat { scale } => {
                positive_scale(*scale)
            }
            TreatmentRule::ComplementMix { base, lambda } => {
                if !(*lambda > 0.0 && *lambda < 1.0) {
                    return bad(format!("mixing weight must lie in (0, 1), got {lambda}"));
                }
                base.validate()
            }
            TreatmentRule::DiscretePriorBayes {
                prior,
                alpha_g,
                noise_sd,
            } => {
                if !(*alpha_g > 1.0 && alpha_g.is_finite()) {
                    return bad(format!("alpha_g must exceed 1, got {alpha_g}"));
                }
                if !prior.is_two_sided() {
                    return Err(Error::PriorSupport(
                        "prior must charge both tau > 0 and tau < 0".into(),
                    ));
                }
                positive_scale(*noise_sd)
            }
        }
    }

    /// Treatment fraction at the given statistic, always in [0, 1].
    pub fn evaluate(&self, stat: f64) -> f64 {
        match self {
            TreatmentRule::EmpiricalSuccess => indicator(stat >= 0.0),
            TreatmentRule::Threshold { t } => indicator(stat >= *t),
            TreatmentRule::HypothesisTest { alpha } => {
                indicator(stat >= test_critical_value(*alpha))
            }
            TreatmentRule::MinimaxMsr { tau_star, scale } => {
                logistic(2.0 * tau_star * stat / scale)
            }
            TreatmentRule::BayesFlatMsr { scale } => bayes_flat_msr(stat / scale),
            TreatmentRule::PosteriorMatchFlat { scale } => std_normal_cdf(stat / scale),
            TreatmentRule::ComplementMix { base, lambda } => {
                let b = base.evaluate(stat);
                ((1.0 - lambda) * b + lambda * (1.0 - b)).clamp(0.0, 1.0)
            }
            TreatmentRule::DiscretePriorBayes {
                prior,
                alpha_g,
                noise_sd,
            } => match solve_bayes_foc(prior, *alpha_g, *noise_sd, stat) {
                Ok(d) => d,
                // The posterior underflowed onto one side; the FOC limit is the sign rule.
                Err(_) => {
                    let w = prior.posterior_weights(*noise_sd, stat);
                    let pos: f64 = prior
                        .support()
                        .iter()
                        .zip(&w)
                        .filter(|(a, _)| a.tau > 0.0)
                        .map(|(_, w)| w)
                        .sum();
                    indicator(pos > 0.5)
                }
            },
        }
    }

    /// Points where the rule jumps, if it is piecewise constant.
    pub fn jump_points(&self) -> Option<Vec<f64>> {
        match self {
            TreatmentRule::EmpiricalSuccess => Some(vec![0.0]),
            TreatmentRule::Threshold { t } => Some(vec![*t]),
            TreatmentRule::HypothesisTest { alpha } => Some(vec![test_critical_value(*alpha)]),
            TreatmentRule::ComplementMix { base, .. } => base.jump_points(),
            _ => None,
        }
    }

    /// Whether the fraction is monotone in the statistic.
    pub fn is_monotone(&self) -> bool {
        match self {
            TreatmentRule::ComplementMix { base, .. } => base.is_monotone(),
            TreatmentRule::DiscretePriorBayes { .. } => false,
            _ => true,
        }
    }

    /// Whether `evaluate(−s) = 1 − evaluate(s)` holds by construction.
    pub fn is_antisymmetric(&self) -> bool {
        match self {
            TreatmentRule::MinimaxMsr { .. }
            | TreatmentRule::BayesFlatMsr { .. }
            | TreatmentRule::PosteriorMatchFlat { .. } => true,
            TreatmentRule::ComplementMix { base, .. } => base.is_antisymmetric(),
            _ => false,
        }
    }
}

fn positive_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "scale must be positive, got {scale}"
        )))
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn test_critical_value(alpha: f64) -> f64 {
    std_normal_quantile(1.0 - alpha).unwrap_or(f64::NAN)
}

/// Φ(u)[1 + uΨ(u)] written as Φ(u) + uφ(u)/(1 + u²).
fn bayes_flat_msr(u: f64) -> f64 {
    if u < -MILLS_SWITCH {
        return bayes_flat_lower_tail(-u);
    }
    if u > MILLS_SWITCH {
        return 1.0 - bayes_flat_lower_tail(u);
    }
    (std_normal_cdf(u) + u * std_normal_pdf(u) / (1.0 + u * u)).clamp(0.0, 1.0)
}

const MILLS_SWITCH: f64 = 8.0;

/// Value of the flat-prior rule at −x for x > 0, computed as
/// φ(x)·[R(x)(1 + x²) − x]/(1 + x²) with the Mills ratio R = Φ̄/φ, which avoids
/// subtracting two nearly equal tail probabilities.
fn bayes_flat_lower_tail(x: f64) -> f64 {
    let mut cf = x;
    for k in (1..=200).rev() {
        cf = x + k as f64 / cf;
    }
    let mills = 1.0 / cf;
    let bracket = (mills * (1.0 + x * x) - x).max(0.0);
    std_normal_pdf(x) * bracket / (1.0 + x * x)
}

/// Posterior mass on each side of zero, as (τ > 0, τ < 0).
fn side_masses(prior: &DiscretePrior, weights: &[f64]) -> (f64, f64) {
    prior
        .support()
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(p, n), (a, w)| {
            if a.tau > 0.0 {
                (p + w, n)
            } else if a.tau < 0.0 {
                (p, n + w)
            } else {
                (p, n)
            }
        })
}

fn check_inputs(prior: &DiscretePrior, noise_sd: f64, stat: f64) -> Result<Vec<f64>> {
    positive_scale(noise_sd)?;
    if !stat.is_finite() {
        return Err(Error::Domain(format!(
            "statistic must be finite, got {stat}"
        )));
    }
    let w = prior.posterior_weights(noise_sd, stat);
    let (pos, neg) = side_masses(prior, &w);
    if pos <= 0.0 || neg <= 0.0 {
        return Err(Error::PriorSupport(format!(
            "posterior mass on tau > 0 is {pos:e} and on tau < 0 is {neg:e} at stat {stat}"
        )));
    }
    Ok(w)
}

/// A rule and its value at one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvaluation {
    pub rule: TreatmentRule,
    pub stat: f64,
    pub value: f64,
}

impl RuleEvaluation {
    pub fn new(rule: &TreatmentRule, stat: f64) -> Self {
        Self {
            rule: rule.clone(),
            stat,
            value: rule.evaluate(stat),
        }
    }
}

/// Bayes treatment fraction for `g(r) = r^alpha_g` at one statistic value.
pub fn solve_bayes_foc(
    prior: &DiscretePrior,
    alpha_g: f64,
    noise_sd: f64,
    stat: f64,
) -> Result<f64> {
    if !(alpha_g > 1.0 && alpha_g.is_finite()) {
        return Err(Error::Domain(format!(
            "alpha_g must exceed 1, got {alpha_g}"
        )));
    }
    let w = check_inputs(prior, noise_sd, stat)?;
    let g_prime = |r: f64| alpha_g * r.max(0.0).powf(alpha_g - 1.0);
    let foc = |delta: f64| -> f64 {
        prior
            .support()
            .iter()
            .zip(&w)
            .map(|(a, wi)| {
                let optimal = if a.tau >= 0.0 { 1.0 } else { 0.0 };
                wi * a.tau * g_prime(a.tau * (optimal - delta))
            })
            .sum()
    };
    find_root(foc, 0.0, 1.0, FOC_TOL)
}

/// Closed form of the `alpha_g = 2` Bayes rule: `Σ_{τ≥0} w̃τ² / Σ w̃τ²`.
pub fn tilted_posterior_match_msr(prior: &DiscretePrior, noise_sd: f64, stat: f64) -> Result<f64> {
    let w = check_inputs(prior, noise_sd, stat)?;
    let (num, den) = prior
        .support()
        .iter()
        .zip(&w)
        .fold((0.0, 0.0), |(num, den), (a, wi)| {
            let m = wi * a.tau * a.tau;
            (if a.tau >= 0.0 { num + m } else { num }, den + m)
        });
    Ok(num / den)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TAU_STAR: f64 = 1.2285;

    fn all_rules() -> Vec<TreatmentRule> {
        let prior =
            DiscretePrior::from_unnormalized(&[(2.0, 1.0), (-1.0, 1.0), (0.5, 2.0)]).unwrap();
        vec![
            TreatmentRule::EmpiricalSuccess,
            TreatmentRule::Threshold { t: 0.7 },
            TreatmentRule::HypothesisTest { alpha: 0.05 },
            TreatmentRule::minimax(TAU_STAR),
            TreatmentRule::BayesFlatMsr { scale: 1.0 },
            TreatmentRule::PosteriorMatchFlat { scale: 2.0 },
            TreatmentRule::complement_mix(TreatmentRule::Threshold { t: 0.0 }, 0.2),
            TreatmentRule::complement_mix(TreatmentRule::minimax(TAU_STAR), 0.9),
            TreatmentRule::DiscretePriorBayes {
                prior: prior.clone(),
                alpha_g: 2.0,
                noise_sd: 1.0,
            },
            TreatmentRule::DiscretePriorBayes {
                prior,
                alpha_g: 3.5,
                noise_sd: 0.5,
            },
        ]
    }

    #[test]
    fn table_values() {
        let v = TreatmentRule::minimax(TAU_STAR).evaluate(0.2533);
        assert!((v - 0.6507).abs() < 1e-3);
        let v = TreatmentRule::BayesFlatMsr { scale: 1.0 }.evaluate(0.8416);
        assert!((v - 0.9379).abs() < 1e-3);
        assert_eq!(TreatmentRule::EmpiricalSuccess.evaluate(-0.3), 0.0);
        let v = TreatmentRule::PosteriorMatchFlat { scale: 1.0 }.evaluate(1.2816);
        assert!((v - 0.9).abs() < 1e-3);
    }

    #[test]
    fn half_at_zero() {
        assert_eq!(TreatmentRule::minimax(TAU_STAR).evaluate(0.0), 0.5);
        assert_eq!(
            TreatmentRule::BayesFlatMsr { scale: 3.0 }.evaluate(0.0),
            0.5
        );
    }

    #[test]
    fn range_on_wide_grid() {
        for rule in all_rules() {
            rule.validate().unwrap();
            for i in -500..=500 {
                let s = i as f64 * 0.1;
                let v = rule.evaluate(s);
                assert!((0.0..=1.0).contains(&v), "{rule:?} at {s}: {v}");
            }
        }
    }

    #[test]
    fn smooth_rules_strictly_increase() {
        let rules = [
            TreatmentRule::minimax(TAU_STAR),
            TreatmentRule::BayesFlatMsr { scale: 1.0 },
            TreatmentRule::PosteriorMatchFlat { scale: 1.0 },
        ];
        for rule in &rules {
            let mut prev = rule.evaluate(-5.0);
            for i in -499..=500 {
                let v = rule.evaluate(i as f64 * 0.01);
                assert!(v > prev, "{rule:?} not increasing at {}", i as f64 * 0.01);
                prev = v;
            }
            let mut prev = 0.0;
            for i in -500..=500 {
                let v = rule.evaluate(i as f64 * 0.1);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn antisymmetry() {
        for i in -300..=300 {
            let s = i as f64 * 0.05;
            let m = TreatmentRule::minimax(TAU_STAR);
            assert!((m.evaluate(-s) - (1.0 - m.evaluate(s))).abs() <= 1e-12);
            let p = TreatmentRule::PosteriorMatchFlat { scale: 1.0 };
            assert!((p.evaluate(-s) - (1.0 - p.evaluate(s))).abs() <= 1e-12);
            let b = TreatmentRule::BayesFlatMsr { scale: 1.0 };
            assert!((b.evaluate(-s) - (1.0 - b.evaluate(s))).abs() <= 1e-10);
        }
    }

    #[test]
    fn bayes_flat_matches_psi_form_and_tilts_away_from_half() {
        let b = TreatmentRule::BayesFlatMsr { scale: 1.0 };
        let p = TreatmentRule::PosteriorMatchFlat { scale: 1.0 };
        for i in -200..=200 {
            let s = i as f64 * 0.025;
            let direct = std_normal_cdf(s) * (1.0 + s * psi(s));
            assert!((b.evaluate(s) - direct).abs() < 1e-13);
            assert!(psi(s) > 0.0);
            if s >= 0.0 {
                assert!(b.evaluate(s) >= p.evaluate(s));
            } else {
                assert!(b.evaluate(s) <= p.evaluate(s));
            }
        }
    }

    #[test]
    fn bayes_flat_lower_tail_keeps_relative_precision() {
        // mpmath at 40 digits
        let refs = [
            (-8.0, 2.780_779_149_455_153_7e-19),
            (-8.5, 3.356_956_102_134_008e-21),
            (-12.0, 1.645_377_358_359_535_3e-37),
            (-30.0, 1.203_521_073_694_061_2e-203),
        ];
        let rule = TreatmentRule::BayesFlatMsr { scale: 1.0 };
        for (u, want) in refs {
            let got = rule.evaluate(u);
            assert!(((got - want) / want).abs() < 1e-9, "{u}: {got} vs {want}");
        }
        let below = rule.evaluate(-MILLS_SWITCH - 1e-12);
        let above = rule.evaluate(-MILLS_SWITCH + 1e-12);
        assert!(((above - below) / above).abs() < 1e-9);
    }

    #[test]
    fn limits() {
        assert!((TreatmentRule::minimax(TAU_STAR).evaluate(40.0) - 1.0).abs() < 1e-15);
        let mix = TreatmentRule::complement_mix(TreatmentRule::Threshold { t: 0.0 }, 0.13);
        assert_eq!(mix.evaluate(-2.0), 0.13);
        let base = TreatmentRule::minimax(TAU_STAR);
        let tiny = TreatmentRule::complement_mix(base.clone(), 1e-12);
        for s in [-3.0, -0.5, 0.0, 0.4, 2.0] {
            assert!((tiny.evaluate(s) - base.evaluate(s)).abs() < 1e-11);
        }
    }

    #[test]
    fn hypothesis_test_uses_normal_critical_value() {
        let ht = TreatmentRule::HypothesisTest { alpha: 0.05 };
        assert_eq!(ht.evaluate(1.64), 0.0);
        assert_eq!(ht.evaluate(1.65), 1.0);
        assert!(TreatmentRule::HypothesisTest { alpha: 0.5 }
            .validate()
            .is_err());
    }

    #[test]
    fn two_point_prior_is_posterior_matching() {
        for a in [0.3, 1.0, 2.5] {
            let prior = DiscretePrior::symmetric_two_point(a).unwrap();
            for sd in [0.5, 1.0, 2.0] {
                for s in [-2.0, -0.4, 0.0, 0.7, 3.0] {
                    let want = logistic(2.0 * a * s / (sd * sd));
                    let got = solve_bayes_foc(&prior, 2.0, sd, s).unwrap();
                    assert!((got - want).abs() < 1e-10, "a={a} sd={sd} s={s}");
                }
            }
        }
    }

    #[test]
    fn symmetric_posterior_gives_half() {
        let prior =
            DiscretePrior::from_unnormalized(&[(1.0, 1.0), (-1.0, 1.0), (3.0, 2.0), (-3.0, 2.0)])
                .unwrap();
        for alpha in [1.5, 2.0, 4.0] {
            let d = solve_bayes_foc(&prior, alpha, 1.0, 0.0).unwrap();
            assert!((d - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_prior_hand_summation() {
        let prior = DiscretePrior::from_unnormalized(&[(2.0, 1.0), (-1.0, 1.0)]).unwrap();
        let wp = std_normal_pdf(-2.0);
        let wm = std_normal_pdf(1.0);
        let want = 4.0 * wp / (4.0 * wp + wm);
        let foc = solve_bayes_foc(&prior, 2.0, 1.0, 0.0).unwrap();
        let tilted = tilted_posterior_match_msr(&prior, 1.0, 0.0).unwrap();
        assert!((foc - want).abs() < 1e-12);
        assert!((tilted - want).abs() < 1e-14);
        assert!((want - 0.471_604_177_756_137_4).abs() < 1e-12);
    }

    #[test]
    fn tilted_rule_examples() {
        let sym = DiscretePrior::symmetric_two_point(1.0).unwrap();
        assert_eq!(tilted_posterior_match_msr(&sym, 1.0, 0.0).unwrap(), 0.5);
        let v = tilted_posterior_match_msr(&sym, 1.0, 0.5).unwrap();
        let e = std::f64::consts::E;
        assert!((v - e / (e + 1.0)).abs() < 1e-14);
        assert!((v - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn one_sided_prior_is_rejected() {
        let prior = DiscretePrior::from_unnormalized(&[(1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!(matches!(
            solve_bayes_foc(&prior, 2.0, 1.0, 0.3),
            Err(Error::PriorSupport(_))
        ));
        assert!(matches!(
            tilted_posterior_match_msr(&prior, 1.0, 0.3),
            Err(Error::PriorSupport(_))
        ));
        let rule = TreatmentRule::DiscretePriorBayes {
            prior,
            alpha_g: 2.0,
            noise_sd: 1.0,
        };
        assert!(rule.validate().is_err());
    }

    #[test]
    fn prior_validation_and_parsing() {
        assert!(DiscretePrior::new(vec![PriorAtom {
            tau: 1.0,
            weight: 0.4
        }])
        .is_err());
        assert!(DiscretePrior::from_unnormalized(&[(1.0, 1.0), (1.0, 1.0)]).is_err());
        assert!(DiscretePrior::from_unnormalized(&[(1.0, -1.0), (2.0, 3.0)]).is_err());
        let p = DiscretePrior::parse("1.5:1, -0.5:3").unwrap();
        assert_eq!(p.support().len(), 2);
        assert!((p.support()[1].weight - 0.75).abs() < 1e-15);
        assert!(DiscretePrior::parse("1.5").is_err());
        assert!(DiscretePrior::parse("x:1").is_err());
    }

    #[test]
    fn posterior_weights_survive_extreme_statistics() {
        let prior = DiscretePrior::symmetric_two_point(1.0).unwrap();
        let w = prior.posterior_weights(1.0, 400.0);
        assert!(w.iter().all(|x| x.is_finite()));
        assert_eq!(w[0], 1.0);
        let rule = TreatmentRule::DiscretePriorBayes {
            prior,
            alpha_g: 2.0,
            noise_sd: 1.0,
        };
        assert_eq!(rule.evaluate(400.0), 1.0);
        assert_eq!(rule.evaluate(-400.0), 0.0);
    }

    #[test]
    fn json_shape() {
        let rule = TreatmentRule::complement_mix(TreatmentRule::Threshold { t: 0.5 }, 0.1);
        let text = serde_json::to_string(&rule).unwrap();
        assert_eq!(
            text,
            r#"{"kind":"complement_mix","base":{"kind":"threshold","t":0.5},"lambda":0.1}"#
        );
        let es: TreatmentRule = serde_json::from_str(r#"{"kind":"empirical_success"}"#).unwrap();
        assert_eq!(es, TreatmentRule::EmpiricalSuccess);
        let bad = serde_json::from_str::<TreatmentRule>(
            r#"{"kind":"discrete_prior_bayes","prior":{"support":[{"tau":1,"weight":0.3}]},"alpha_g":2,"noise_sd":1}"#,
        );
        assert!(bad.is_err());
    }

    fn arb_prior() -> impl Strategy<Value = DiscretePrior> {
        (
            prop::collection::vec((0.05f64..4.0, 0.05f64..1.0), 1..4),
            prop::collection::vec((0.05f64..4.0, 0.05f64..1.0), 1..4),
            prop::option::of(0.05f64..1.0),
        )
            .prop_filter_map("distinct support", |(pos, neg, zero)| {
                let mut pts: Vec<(f64, f64)> = pos.into_iter().collect();
                pts.extend(neg.into_iter().map(|(t, w)| (-t, w)));
                if let Some(w) = zero {
                    pts.push((0.0, w));
                }
                DiscretePrior::from_unnormalized(&pts).ok()
            })
    }

    proptest! {
        #[test]
        fn foc_alpha_two_equals_tilted_rule(prior in arb_prior(), sd in 0.3f64..3.0, s in -4.0f64..4.0) {
            let a = solve_bayes_foc(&prior, 2.0, sd, s).unwrap();
            let b = tilted_posterior_match_msr(&prior, sd, s).unwrap();
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }

        #[test]
        fn foc_matches_power_closed_form(prior in arb_prior(), alpha in 1.2f64..5.0, s in -3.0f64..3.0) {
            // For g(r) = r^α the FOC reduces to A(1−δ)^{α−1} = Bδ^{α−1} with
            // A = Σ_{τ>0} w̃τ^α and B = Σ_{τ<0} w̃|τ|^α.
            let w = prior.posterior_weights(1.0, s);
            let (mut a, mut b) = (0.0, 0.0);
            for (atom, wi) in prior.support().iter().zip(&w) {
                if atom.tau > 0.0 { a += wi * atom.tau.powf(alpha) }
                if atom.tau < 0.0 { b += wi * (-atom.tau).powf(alpha) }
            }
            let want = 1.0 / (1.0 + (b / a).powf(1.0 / (alpha - 1.0)));
            let got = solve_bayes_foc(&prior, alpha, 1.0, s).unwrap();
            prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
        }

        #[test]
        fn rule_json_round_trip(t in -5.0f64..5.0, lambda in 0.01f64..0.99, scale in 0.1f64..5.0) {
            let rules = [
                TreatmentRule::complement_mix(TreatmentRule::Threshold { t }, lambda),
                TreatmentRule::MinimaxMsr { tau_star: scale, scale },
                TreatmentRule::BayesFlatMsr { scale },
            ];
            for rule in rules {
                let back: TreatmentRule = serde_json::from_str(&serde_json::to_string(&rule).unwrap()).unwrap();
                prop_assert_eq!(back, rule);
            }
        }
    }
}
