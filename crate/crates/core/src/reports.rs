//! Tabulated outputs: treatment fractions on a quantile grid, unit-experiment
//! summaries, and long-format rule and risk curves.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{QuadratureSpec, RngSeed};
use crate::risk::{
    exact_risk_with_tails, risk_curve, simulate_with_tails, GaussianExperiment, RiskReport,
    SimulationSummary,
};
use crate::rules::TreatmentRule;

/// Standard normal quantiles at 0.5, 0.6, 0.7, 0.8, 0.9, 0.95 and 0.99, to
/// four decimals.
pub const TABLE1_GRID: [f64; 7] = [0.0, 0.2533, 0.5244, 0.8416, 1.2816, 1.6449, 2.3263];

/// Regret level for the tail probability in [`figure1`].
pub const FIGURE1_TAIL: f64 = 0.95;

/// Inclusive arithmetic grid written `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Input(format!(
                "grid needs finite lo <= hi, got {lo}:{hi}"
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Input(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if (hi - lo) / step > 1e7 {
            return Err(Error::Input("grid has more than 10^7 points".into()));
        }
        Ok(Self { lo, hi, step })
    }

    /// Points `lo + k·step` up to `hi`, computed by multiplication so that
    /// rounding does not accumulate.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| self.lo + k as f64 * self.step)
            .collect()
    }
}

impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Input(format!("grid '{s}' is not lo:hi:step")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("grid '{s}': '{p}' is not a number")))
        };
        Grid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub ybar: f64,
    pub minimax: f64,
    pub bayes: f64,
    pub posterior_match: f64,
    pub es: f64,
}

/// Rule fractions at the quantile grid in a unit-variance experiment.
pub fn table1(tau_star: f64) -> Vec<Table1Row> {
    let minimax = TreatmentRule::minimax(tau_star);
    let bayes = TreatmentRule::BayesFlatMsr { scale: 1.0 };
    let pm = TreatmentRule::PosteriorMatchFlat { scale: 1.0 };
    TABLE1_GRID
        .iter()
        .map(|&y| Table1Row {
            ybar: y,
            minimax: minimax.evaluate(y),
            bayes: bayes.evaluate(y),
            posterior_match: pm.evaluate(y),
            es: TreatmentRule::EmpiricalSuccess.evaluate(y),
        })
        .collect()
}

pub fn write_table1_csv<W: Write>(out: W, rows: &[Table1Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
    w.write_record(["ybar", "minimax", "bayes", "posterior_match", "es"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.ybar.to_string(),
            r.minimax.to_string(),
            r.bayes.to_string(),
            r.posterior_match.to_string(),
            r.es.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing CSV: {e}")))
}

/// Regret and welfare summary of one rule in the `N(1, 1)` single-draw experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Stats {
    pub rule: TreatmentRule,
    pub mean_regret: f64,
    pub regret_sd: f64,
    pub welfare_mean: f64,
    pub welfare_sd: f64,
    pub mean_square_regret: f64,
    pub prob_regret_above_095: f64,
    pub exact: RiskReport,
    pub simulated: Option<SimulationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Report {
    pub tau: f64,
    pub es: Figure1Stats,
    pub minimax: Figure1Stats,
}

/// Exact statistics for ES and the minimax rule at `τ = σ = n = 1`, plus a
/// Monte Carlo run when `simulation` gives `(replications, seed)`.
pub fn figure1(
    tau_star: f64,
    simulation: Option<(u64, RngSeed)>,
    spec: &QuadratureSpec,
) -> Result<Figure1Report> {
    let exp = GaussianExperiment::unit(1.0);
    let stats = |rule: TreatmentRule| -> Result<Figure1Stats> {
        let exact = exact_risk_with_tails(&rule, &exp, spec, &[FIGURE1_TAIL])?;
        let simulated = match simulation {
            Some((reps, seed)) => Some(simulate_with_tails(
                &rule,
                &exp,
                reps,
                seed,
                &[FIGURE1_TAIL],
            )?),
            None => None,
        };
        Ok(Figure1Stats {
            mean_regret: exact.mean_regret,
            regret_sd: exact.regret_sd(),
            welfare_mean: exact.welfare_mean,
            welfare_sd: exact.welfare_sd,
            mean_square_regret: exact.mean_square_regret,
            prob_regret_above_095: exact.tail[0].prob_regret_exceeds,
            rule,
            exact,
            simulated,
        })
    };
    Ok(Figure1Report {
        tau: 1.0,
        es: stats(TreatmentRule::EmpiricalSuccess)?,
        minimax: stats(TreatmentRule::minimax(tau_star))?,
    })
}

/// One row of the long-format curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub figure: String,
    pub rule: String,
    pub x: f64,
    pub value: f64,
}

/// Rule shapes over `stat_grid`, and MSR, mean regret and regret sd over
/// `tau_grid`, in a unit-variance experiment.
pub fn figures3to6(
    tau_star: f64,
    stat_grid: &[f64],
    tau_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<CurvePoint>> {
    let named = [
        ("minimax", TreatmentRule::minimax(tau_star)),
        ("bayes", TreatmentRule::BayesFlatMsr { scale: 1.0 }),
        (
            "posterior_match",
            TreatmentRule::PosteriorMatchFlat { scale: 1.0 },
        ),
        ("es", TreatmentRule::EmpiricalSuccess),
    ];
    let mut out = Vec::new();
    for (name, rule) in &named {
        out.extend(stat_grid.iter().map(|&s| CurvePoint {
            figure: "rules".into(),
            rule: (*name).into(),
            x: s,
            value: rule.evaluate(s),
        }));
    }
    let risk_rules: Vec<_> = named
        .iter()
        .filter(|(n, _)| *n != "posterior_match")
        .collect();
    let curves = risk_rules
        .par_iter()
        .map(|(_, rule)| risk_curve(rule, tau_grid, 1.0, 1, spec))
        .collect::<Result<Vec<_>>>()?;
    type Pick = fn(&RiskReport) -> f64;
    let panels: [(&str, Pick); 3] = [
        ("msr", |r| r.mean_square_regret),
        ("mean_regret", |r| r.mean_regret),
        ("regret_sd", |r| r.regret_sd()),
    ];
    for (figure, pick) in panels {
        for ((name, _), curve) in risk_rules.iter().zip(&curves) {
            out.extend(curve.iter().map(|(tau, r)| CurvePoint {
                figure: figure.into(),
                rule: (*name).into(),
                x: *tau,
                value: pick(r),
            }));
        }
    }
    Ok(out)
}

pub fn write_curves_csv<W: Write>(out: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
    w.write_record(["figure", "rule", "x", "value"])
        .map_err(io)?;
    for p in points {
        w.write_record([
            p.figure.clone(),
            p.rule.clone(),
            p.x.to_string(),
            p.value.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing CSV: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TAU_STAR;

    #[test]
    fn grid_parsing() {
        let g: Grid = "0:1:0.25".parse().unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = "-4:4:0.1".parse().unwrap();
        assert_eq!(g.points().len(), 81);
        assert!((g.points()[80] - 4.0).abs() < 1e-12);
        assert!("0:1".parse::<Grid>().is_err());
        assert!("1:0:0.1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
        assert!("a:1:0.1".parse::<Grid>().is_err());
    }

    #[test]
    fn table1_columns() {
        let rows = table1(TAU_STAR);
        let minimax = [0.5, 0.6507, 0.7838, 0.8877, 0.9588, 0.9827, 0.9967];
        let bayes = [0.5, 0.6920, 0.8430, 0.9379, 0.9851, 0.9958, 0.9997];
        let pm = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
        for (i, r) in rows.iter().enumerate() {
            assert!((r.minimax - minimax[i]).abs() < 1.5e-3);
            assert!((r.bayes - bayes[i]).abs() < 1e-3);
            assert!((r.posterior_match - pm[i]).abs() < 1e-3);
            assert_eq!(r.es, 1.0);
        }
        let mut buf = Vec::new();
        write_table1_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("ybar,minimax,bayes,posterior_match,es\n0,0.5,0.5,0.5,1\n"),
            "{text}"
        );
    }

    #[test]
    fn figure1_exact() {
        let f = figure1(TAU_STAR, None, &QuadratureSpec::default()).unwrap();
        assert!((f.es.mean_regret - 0.1587).abs() < 1e-3);
        assert!((f.es.regret_sd - 0.3654).abs() < 1e-3);
        assert!((f.es.welfare_mean - 0.8413).abs() < 1e-3);
        assert!((f.minimax.mean_regret - 0.2087).abs() < 3e-3);
        assert!((f.minimax.welfare_mean - 0.7913).abs() < 3e-3);
        assert!((f.minimax.mean_square_regret - 0.1133).abs() < 2e-3);
        assert!((0.26..=0.275).contains(&f.minimax.regret_sd));
        assert!((f.minimax.prob_regret_above_095 - 0.014).abs() < 3e-3);
        assert!(f.minimax.simulated.is_none());
    }

    #[test]
    fn curves_layout() {
        let pts = figures3to6(
            TAU_STAR,
            &[-1.0, 0.0, 1.0],
            &[0.0, 1.0],
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_eq!(pts.len(), 4 * 3 + 3 * 3 * 2);
        let es_msr: Vec<_> = pts
            .iter()
            .filter(|p| p.figure == "msr" && p.rule == "es")
            .collect();
        assert_eq!(es_msr.len(), 2);
        assert_eq!(es_msr[0].value, 0.0);
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &pts).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("figure,rule,x,value\n"));
    }

    #[test]
    fn curves_are_deterministic() {
        let spec = QuadratureSpec::default();
        let a = figures3to6(TAU_STAR, &[0.5], &[0.3, 1.1], &spec).unwrap();
        let b = figures3to6(TAU_STAR, &[0.5], &[0.3, 1.1], &spec).unwrap();
        assert_eq!(a, b);
    }
}
