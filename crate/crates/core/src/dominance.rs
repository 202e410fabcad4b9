//! Fractional rules dominating interior threshold rules under `g(r) = r^α`.
//!
//! The statistic is `τ̂ ~ N(τ, sd²)` and the threshold rule treats everyone
//! iff `τ̂ ≥ t`. Its complement mixture `(1 − λ)·1{τ̂ ≥ t} + λ·1{τ̂ < t}` has
//! regret `(1 − λ)Reg + λ·Reg(1 − δ)`, and for every `0 < λ < λ*` its
//! `g`-risk is no larger than the threshold rule's on `[−τ̄, τ̄]`, strictly so
//! off `τ = 0`. With `m` the smaller of
//!
//! ```text
//!   p⁺ = min_{τ ∈ [0, τ̄]}  P_τ(τ̂ < t) = Φ((t − τ̄)/sd)
//!   p⁻ = min_{τ ∈ [−τ̄, 0]} P_τ(τ̂ ≥ t) = 1 − Φ((t + τ̄)/sd)
//! ```
//!
//! and `r = m/(1 − m)`, the bound is `λ* = r^{1/(α−1)} / (1 + r^{1/(α−1)})`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{std_normal_cdf, std_normal_sf, QuadratureSpec};
use crate::risk::regret_moment;
use crate::rules::TreatmentRule;

pub const DEFAULT_SHRINK: f64 = 0.5;
/// Margins below this are treated as zero.
pub const MARGIN_TOL: f64 = 1e-12;
const SCAN_POINTS: usize = 100;

fn check_setup(t: f64, tau_bar: f64, noise_sd: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("threshold must be finite, got {t}")));
    }
    if !(tau_bar > 0.0 && tau_bar.is_finite()) {
        return Err(Error::Domain(format!(
            "tau_bar must be positive, got {tau_bar}"
        )));
    }
    if !(noise_sd > 0.0 && noise_sd.is_finite()) {
        return Err(Error::Domain(format!(
            "noise sd must be positive, got {noise_sd}"
        )));
    }
    Ok(())
}

/// `(p⁺, p⁻)`; the minima sit at `τ = ±τ̄` by monotone likelihood ratio.
pub fn tail_bounds(t: f64, tau_bar: f64, noise_sd: f64) -> Result<(f64, f64)> {
    check_setup(t, tau_bar, noise_sd)?;
    let p_plus = std_normal_cdf((t - tau_bar) / noise_sd);
    let p_minus = std_normal_sf((t + tau_bar) / noise_sd);
    #[cfg(debug_assertions)]
    {
        let (sp, sm) = tail_bounds_by_scan(t, tau_bar, noise_sd)?;
        debug_assert!((sp - p_plus).abs() <= 1e-10 && (sm - p_minus).abs() <= 1e-10);
    }
    Ok((p_plus, p_minus))
}

/// The same minima found by scanning 100 states on each half-interval.
pub fn tail_bounds_by_scan(t: f64, tau_bar: f64, noise_sd: f64) -> Result<(f64, f64)> {
    check_setup(t, tau_bar, noise_sd)?;
    let grid = |k: usize| tau_bar * k as f64 / (SCAN_POINTS - 1) as f64;
    let p_plus = (0..SCAN_POINTS)
        .map(|k| std_normal_cdf((t - grid(k)) / noise_sd))
        .fold(f64::INFINITY, f64::min);
    let p_minus = (0..SCAN_POINTS)
        .map(|k| std_normal_sf((t + grid(k)) / noise_sd))
        .fold(f64::INFINITY, f64::min);
    Ok((p_plus, p_minus))
}

/// Upper end of the dominating mixing weights.
pub fn lambda_star(p_plus: f64, p_minus: f64, alpha_g: f64) -> Result<f64> {
    for p in [p_plus, p_minus] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "tail bounds must lie in (0, 1), got {p}"
            )));
        }
    }
    if !(alpha_g > 1.0 && alpha_g.is_finite()) {
        return Err(Error::Domain(format!(
            "alpha_g must exceed 1, got {alpha_g}"
        )));
    }
    let m = p_plus.min(p_minus);
    // r^{1/(α−1)} / (1 + r^{1/(α−1)}) written as 1 / (1 + r^{−1/(α−1)}).
    let inv_r = (1.0 - m) / m;
    Ok(1.0 / (1.0 + inv_r.powf(1.0 / (alpha_g - 1.0))))
}

/// `ComplementMix{Threshold{t}, shrink·λ*}`.
pub fn dominating_rule(
    t: f64,
    tau_bar: f64,
    alpha_g: f64,
    noise_sd: f64,
    shrink: f64,
) -> Result<TreatmentRule> {
    Ok(TreatmentRule::complement_mix(
        TreatmentRule::Threshold { t },
        mixing_weight(t, tau_bar, alpha_g, noise_sd, shrink)?.1,
    ))
}

fn mixing_weight(
    t: f64,
    tau_bar: f64,
    alpha_g: f64,
    noise_sd: f64,
    shrink: f64,
) -> Result<(f64, f64)> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::Domain(format!(
            "shrink must lie in (0, 1), got {shrink}"
        )));
    }
    let (p_plus, p_minus) = tail_bounds(t, tau_bar, noise_sd)?;
    let ls = lambda_star(p_plus, p_minus, alpha_g)?;
    Ok((ls, shrink * ls))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominancePoint {
    pub tau: f64,
    pub risk_singleton: f64,
    pub risk_fractional: f64,
    pub margin: f64,
}

/// Grid evidence that the mixture dominates the threshold rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificate {
    pub threshold_t: f64,
    pub tau_bar: f64,
    pub alpha_g: f64,
    pub noise_sd: f64,
    pub lambda_star: f64,
    pub lambda_used: f64,
    pub grid: Vec<DominancePoint>,
}

impl DominanceCertificate {
    /// First grid state where the margin is negative, or not strictly
    /// positive at distance at least `grid_step` from zero.
    pub fn first_violation(&self, grid_step: f64) -> Option<DominancePoint> {
        self.grid.iter().copied().find(|p| {
            p.margin < -MARGIN_TOL
                || (p.tau.abs() >= grid_step * (1.0 - 1e-9) && p.margin <= MARGIN_TOL)
        })
    }
}

/// `τ ∈ [−τ̄, τ̄]` at `step` spacing, including both endpoints and zero.
fn symmetric_grid(tau_bar: f64, step: f64) -> Vec<f64> {
    let k = (tau_bar / step + 1e-9).floor() as i64;
    let mut grid: Vec<f64> = (-k..=k).map(|i| i as f64 * step).collect();
    if (k as f64 * step - tau_bar).abs() > 1e-12 {
        grid.insert(0, -tau_bar);
        grid.push(tau_bar);
    }
    grid
}

/// Computes the certificate and fails on the first violating state.
pub fn verify_dominance(
    t: f64,
    tau_bar: f64,
    alpha_g: f64,
    noise_sd: f64,
    shrink: f64,
    grid_step: f64,
) -> Result<DominanceCertificate> {
    let cert = dominance_certificate(t, tau_bar, alpha_g, noise_sd, shrink, grid_step)?;
    match cert.first_violation(grid_step) {
        Some(p) => Err(Error::DominanceViolation {
            tau: p.tau,
            margin: p.margin,
        }),
        None => Ok(cert),
    }
}

/// The certificate without the validity check.
pub fn dominance_certificate(
    t: f64,
    tau_bar: f64,
    alpha_g: f64,
    noise_sd: f64,
    shrink: f64,
    grid_step: f64,
) -> Result<DominanceCertificate> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::Domain(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let (ls, lambda) = mixing_weight(t, tau_bar, alpha_g, noise_sd, shrink)?;
    let singleton = TreatmentRule::Threshold { t };
    let mixture = TreatmentRule::complement_mix(singleton.clone(), lambda);
    let spec = QuadratureSpec::default();
    let grid = symmetric_grid(tau_bar, grid_step)
        .into_par_iter()
        .map(|tau| {
            let risk_singleton = regret_moment(&singleton, tau, tau, noise_sd, alpha_g, &spec)?;
            let risk_fractional = regret_moment(&mixture, tau, tau, noise_sd, alpha_g, &spec)?;
            Ok(DominancePoint {
                tau,
                risk_singleton,
                risk_fractional,
                margin: risk_singleton - risk_fractional,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DominanceCertificate {
        threshold_t: t,
        tau_bar,
        alpha_g,
        noise_sd,
        lambda_star: ls,
        lambda_used: lambda,
        grid,
    })
}

/// Writes the certificate grid as CSV.
pub fn write_dominance_csv<W: Write>(out: W, cert: &DominanceCertificate) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
    w.write_record(["tau", "risk_singleton", "risk_fractional", "margin"])
        .map_err(io)?;
    for p in &cert.grid {
        w.write_record([
            p.tau.to_string(),
            p.risk_singleton.to_string(),
            p.risk_fractional.to_string(),
            p.margin.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("writing CSV: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_expectation;
    use crate::risk::regret;
    use proptest::prelude::*;

    const PHI_M1: f64 = 0.158_655_253_931_457;

    #[test]
    fn tail_bound_examples() {
        let (p, m) = tail_bounds(0.0, 1.0, 1.0).unwrap();
        assert!((p - PHI_M1).abs() < 1e-14 && (m - PHI_M1).abs() < 1e-14);
        let (p, m) = tail_bounds(0.0, 1e-9, 1.0).unwrap();
        assert!((p - 0.5).abs() < 1e-9 && (m - 0.5).abs() < 1e-9);
        let (p, m) = tail_bounds(1.0, 1.0, 1.0).unwrap();
        assert_eq!(p, 0.5);
        assert!((m - 0.022_750_131_948_179).abs() < 1e-14);
        assert!(tail_bounds(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn scan_agrees_with_endpoints() {
        for t in [-1.0, 0.0, 0.7] {
            for tau_bar in [0.5, 2.0] {
                for sd in [0.5, 1.0, 3.0] {
                    let a = tail_bounds(t, tau_bar, sd).unwrap();
                    let b = tail_bounds_by_scan(t, tau_bar, sd).unwrap();
                    assert!((a.0 - b.0).abs() <= 1e-10 && (a.1 - b.1).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn lambda_star_examples() {
        assert_eq!(lambda_star(0.5, 0.5, 2.0).unwrap(), 0.5);
        let l = lambda_star(PHI_M1, PHI_M1, 2.0).unwrap();
        assert!((l - PHI_M1).abs() < 1e-15);
        // Hand arithmetic from a four-digit r gives 0.15873.
        assert!((l - 0.15873).abs() < 1e-4);
        let l = lambda_star(0.5, 0.02275, 2.0).unwrap();
        assert!((l - 0.02275).abs() < 1e-15);
        let l3 = lambda_star(PHI_M1, PHI_M1, 3.0).unwrap();
        assert!((l3 - 0.302_771_7).abs() < 1e-6);
        assert!(lambda_star(0.0, 0.3, 2.0).is_err());
        assert!(lambda_star(0.3, 0.3, 1.0).is_err());
    }

    #[test]
    fn dominating_rule_examples() {
        let rule = dominating_rule(0.0, 1.0, 2.0, 1.0, 0.5).unwrap();
        match &rule {
            TreatmentRule::ComplementMix { base, lambda } => {
                assert_eq!(**base, TreatmentRule::Threshold { t: 0.0 });
                assert!((lambda - 0.0794).abs() < 1e-4);
            }
            other => panic!("unexpected rule {other:?}"),
        }
        let rule3 = dominating_rule(0.0, 1.0, 3.0, 1.0, 0.5).unwrap();
        if let TreatmentRule::ComplementMix { lambda, .. } = rule3 {
            assert!((lambda - 0.151_385_8).abs() < 1e-6);
            assert!((lambda - 0.15141).abs() < 5e-5);
        }
        let tiny = dominating_rule(0.3, 1.0, 2.0, 1.0, 1e-12).unwrap();
        for s in [-1.0, 0.2, 0.4, 2.0] {
            let base = TreatmentRule::Threshold { t: 0.3 }.evaluate(s);
            assert!((tiny.evaluate(s) - base).abs() < 1e-12);
        }
        assert!(dominating_rule(0.0, 1.0, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn reference_certificate() {
        let cert = verify_dominance(0.0, 1.0, 2.0, 1.0, 0.5, 0.05).unwrap();
        assert_eq!(cert.grid.len(), 41);
        let zero = cert.grid.iter().find(|p| p.tau == 0.0).unwrap();
        assert_eq!(zero.margin, 0.0);
        let one = cert.grid.last().unwrap();
        assert!((one.tau - 1.0).abs() < 1e-12);
        assert!((one.risk_singleton - PHI_M1).abs() < 1e-12);
        assert!(one.risk_fractional < one.risk_singleton);
        // (1−λ)²Φ(−1) + λ²(1 − Φ(−1)) with λ = Φ(−1)/2.
        let lam = 0.5 * PHI_M1;
        let want = (1.0 - lam).powi(2) * PHI_M1 + lam * lam * (1.0 - PHI_M1);
        assert!((one.risk_fractional - want).abs() < 1e-14);
        assert!((want - 0.139_776_6).abs() < 1e-6);
    }

    #[test]
    fn shrink_close_to_one_still_dominates() {
        verify_dominance(0.0, 1.0, 2.0, 1.0, 0.999, 0.05).unwrap();
        verify_dominance(0.5, 2.0, 3.0, 1.0, 0.999, 0.05).unwrap();
    }

    #[test]
    fn lambda_above_bound_fails_somewhere() {
        // λ well past λ* loses at the far end of the interval.
        let singleton = TreatmentRule::Threshold { t: 1.0 };
        let mixture = TreatmentRule::complement_mix(singleton.clone(), 0.4);
        let spec = QuadratureSpec::default();
        let tau = -2.0;
        let a = regret_moment(&singleton, tau, tau, 1.0, 2.0, &spec).unwrap();
        let b = regret_moment(&mixture, tau, tau, 1.0, 2.0, &spec).unwrap();
        assert!(b > a);
    }

    #[test]
    fn lambda_star_decreases_with_tau_bar() {
        for t in [-0.5, 0.0, 1.0] {
            let mut prev = f64::INFINITY;
            for i in 1..=40 {
                let tau_bar = 0.1 * i as f64;
                let (p, m) = tail_bounds(t, tau_bar, 1.0).unwrap();
                let ls = lambda_star(p, m, 2.0).unwrap();
                assert!(ls < prev);
                prev = ls;
            }
        }
    }

    #[test]
    fn mixture_regret_decomposes() {
        let spec = QuadratureSpec::default();
        let lam = 0.13;
        let base = TreatmentRule::Threshold { t: 0.4 };
        let mix = TreatmentRule::complement_mix(base.clone(), lam);
        for tau in [-1.3, -0.2, 0.6, 1.9] {
            for alpha in [1.5, 2.0, 3.0] {
                let direct = regret_moment(&mix, tau, tau, 1.0, alpha, &spec).unwrap();
                let composed = gaussian_expectation(
                    |s| {
                        let b = base.evaluate(s);
                        ((1.0 - lam) * regret(b, tau) + lam * regret(1.0 - b, tau)).powf(alpha)
                    },
                    tau,
                    1.0,
                    &spec,
                )
                .unwrap();
                // Pointwise identity; the quadrature of the step integrand is
                // only accurate to its fallback tolerance.
                assert!((direct - composed).abs() < 1e-8, "{direct} vs {composed}");
                for s in [-2.0, 0.0, 0.39, 0.41, 3.0] {
                    let b = base.evaluate(s);
                    let lhs = regret(mix.evaluate(s), tau);
                    let rhs = (1.0 - lam) * regret(b, tau) + lam * regret(1.0 - b, tau);
                    assert!((lhs - rhs).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_header() {
        let cert = verify_dominance(0.0, 0.5, 2.0, 1.0, 0.5, 0.25).unwrap();
        let mut buf = Vec::new();
        write_dominance_csv(&mut buf, &cert).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,risk_singleton,risk_fractional,margin\n"));
        assert_eq!(text.lines().count(), 1 + cert.grid.len());
    }

    #[test]
    fn margins_below_resolution_are_reported() {
        // λ* ≈ m^{1/(α−1)} underflows the strictness tolerance when the tail
        // bound is tiny and α is close to one; the margin is then positive in
        // exact arithmetic but not resolvable in double precision.
        let cert = dominance_certificate(0.35, 2.8, 1.2, 0.5, 0.05, 0.1).unwrap();
        assert!(cert.lambda_used < 1e-50);
        assert!(cert.grid.iter().all(|p| p.margin >= -MARGIN_TOL));
        assert!(matches!(
            verify_dominance(0.35, 2.8, 1.2, 0.5, 0.05, 0.1),
            Err(Error::DominanceViolation { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn any_interior_weight_dominates(
            t in -1.0f64..1.0,
            tau_bar in 0.2f64..2.0,
            alpha in 1.5f64..3.5,
            sd in 0.8f64..2.0,
            shrink in 0.1f64..0.95,
        ) {
            prop_assert!(verify_dominance(t, tau_bar, alpha, sd, shrink, 0.1).is_ok());
        }

        #[test]
        fn mixture_never_does_worse(
            t in -1.5f64..1.5,
            tau_bar in 0.2f64..3.0,
            alpha in 1.1f64..4.0,
            sd in 0.3f64..2.0,
            shrink in 0.01f64..0.99,
        ) {
            let cert = dominance_certificate(t, tau_bar, alpha, sd, shrink, 0.1).unwrap();
            for p in &cert.grid {
                prop_assert!(p.margin >= -MARGIN_TOL, "tau {} margin {}", p.tau, p.margin);
            }
        }
    }
}
