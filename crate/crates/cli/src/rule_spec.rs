//! Textual rule specifications accepted by `--rule`.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use treatment_choice::{DiscretePrior, TreatmentRule};

/// Parsed `--rule` value. `minimax` and `prior-bayes` need context (`τ*`, the
/// prior) and are resolved later.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSpec {
    raw: String,
    kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Es,
    Ht(Option<f64>),
    Minimax(Option<f64>),
    BayesFlat,
    PostMatch,
    Threshold(f64),
    Mix(Box<Kind>, f64),
    PriorBayes,
    Explicit(TreatmentRule),
}

/// Values a rule specification may draw on when it is resolved.
pub struct RuleContext<'a> {
    pub alpha: Option<f64>,
    pub prior: Option<&'a DiscretePrior>,
    pub alpha_g: f64,
    pub noise_sd: f64,
}

const DEFAULT_HT_ALPHA: f64 = 0.05;

fn number(text: &str, what: &str) -> Result<f64, String> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{what}: '{text}' is not a finite number"))
}

fn parse_kind(text: &str) -> Result<Kind, String> {
    let text = text.trim();
    if text.starts_with('{') {
        let rule: TreatmentRule =
            serde_json::from_str(text).map_err(|e| format!("rule JSON: {e}"))?;
        rule.validate().map_err(|e| e.to_string())?;
        return Ok(Kind::Explicit(rule));
    }
    let (head, arg) = match text.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (text, None),
    };
    match (head, arg) {
        ("es", None) => Ok(Kind::Es),
        ("ht", None) => Ok(Kind::Ht(None)),
        ("ht", Some(a)) => Ok(Kind::Ht(Some(number(a, "ht size")?))),
        ("minimax", None) => Ok(Kind::Minimax(None)),
        ("minimax", Some(a)) => Ok(Kind::Minimax(Some(number(a, "minimax tau_star")?))),
        ("bayes-flat", None) => Ok(Kind::BayesFlat),
        ("post-match", None) => Ok(Kind::PostMatch),
        ("threshold", Some(a)) => Ok(Kind::Threshold(number(a, "threshold")?)),
        ("prior-bayes", None) => Ok(Kind::PriorBayes),
        ("mix", Some(a)) => {
            let (base, lambda) = a
                .rsplit_once(',')
                .ok_or_else(|| format!("mix needs 'mix:base,lambda', got '{text}'"))?;
            let lambda = number(lambda, "mix lambda")?;
            Ok(Kind::Mix(Box::new(parse_kind(base)?), lambda))
        }
        _ => Err(format!(
            "unknown rule '{text}'; expected es, ht[:alpha], minimax[:tau], bayes-flat, \
             post-match, threshold:t, mix:base,lambda, prior-bayes or a JSON object"
        )),
    }
}

impl FromStr for RuleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self {
            raw: s.to_string(),
            kind: parse_kind(s)?,
        })
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for RuleSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl RuleSpec {
    pub fn minimax() -> Self {
        Self {
            raw: "minimax".into(),
            kind: Kind::Minimax(None),
        }
    }

    /// Whether resolution reads the solved `τ*`.
    pub fn needs_tau_star(&self) -> bool {
        fn walk(k: &Kind) -> bool {
            match k {
                Kind::Minimax(None) => true,
                Kind::Mix(base, _) => walk(base),
                _ => false,
            }
        }
        walk(&self.kind)
    }

    /// Builds the rule; `tau_star` is only consulted for a bare `minimax`.
    pub fn resolve(
        &self,
        tau_star: Option<f64>,
        ctx: &RuleContext<'_>,
    ) -> Result<TreatmentRule, String> {
        fn build(
            k: &Kind,
            tau_star: Option<f64>,
            ctx: &RuleContext<'_>,
        ) -> Result<TreatmentRule, String> {
            Ok(match k {
                Kind::Es => TreatmentRule::EmpiricalSuccess,
                Kind::Ht(a) => TreatmentRule::HypothesisTest {
                    alpha: a.or(ctx.alpha).unwrap_or(DEFAULT_HT_ALPHA),
                },
                Kind::Minimax(Some(t)) => TreatmentRule::minimax(*t),
                Kind::Minimax(None) => TreatmentRule::minimax(
                    tau_star.ok_or_else(|| "minimax rule needs tau_star".to_string())?,
                ),
                Kind::BayesFlat => TreatmentRule::BayesFlatMsr { scale: 1.0 },
                Kind::PostMatch => TreatmentRule::PosteriorMatchFlat { scale: 1.0 },
                Kind::Threshold(t) => TreatmentRule::Threshold { t: *t },
                Kind::Mix(base, lambda) => {
                    TreatmentRule::complement_mix(build(base, tau_star, ctx)?, *lambda)
                }
                Kind::PriorBayes => TreatmentRule::DiscretePriorBayes {
                    prior: ctx
                        .prior
                        .cloned()
                        .ok_or_else(|| "rule prior-bayes needs --prior".to_string())?,
                    alpha_g: ctx.alpha_g,
                    noise_sd: ctx.noise_sd,
                },
                Kind::Explicit(rule) => rule.clone(),
            })
        }
        let rule = build(&self.kind, tau_star, ctx)?;
        rule.validate().map_err(|e| e.to_string())?;
        Ok(rule)
    }
}
