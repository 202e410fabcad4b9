//! Scalar root finding and maximization (Brent's methods).

use crate::error::{Error, Result};

const MAX_ITER: usize = 500;
const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5) / 2

/// Root of `f` on `[lo, hi]` by Brent's method.
///
/// Stops once the bracket is no wider than `tol` (plus a few ulps of the
/// iterate) or `f` vanishes exactly.
pub fn find_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "find_root needs a finite interval and positive tol, got [{lo}, {hi}], tol {tol}"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::Domain(
            "objective is NaN at a bracket endpoint".into(),
        ));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::Convergence(format!(
        "Brent root search did not converge in {MAX_ITER} iterations"
    )))
}

/// Maximizer of `f` on `[lo, hi]`: golden section with parabolic steps,
/// then compared against both endpoints. Ties go to the smaller abscissa.
pub fn maximize_scalar<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    assert!(lo <= hi, "maximize_scalar: lo > hi");
    let neg = |x: f64| -f(x);
    let (xi, fi) = brent_minimize(neg, lo, hi, tol);
    let mut best = (xi, -fi);
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 || (v == best.1 && x < best.0) {
            best = (x, v);
        }
    }
    best
}

fn brent_minimize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let tol = tol.max(0.0);
    for _ in 0..MAX_ITER {
        let xm = 0.5 * (a + b);
        let tol1 = f64::EPSILON.sqrt() * x.abs() + tol / 3.0 + f64::MIN_POSITIVE;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal::{std_normal_cdf, std_normal_sf};

    #[test]
    fn linear_root() {
        let r = find_root(|x| x - 0.3, 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 0.3).abs() < 1e-13);
    }

    #[test]
    fn normal_quantile_root() {
        let r = find_root(|x| std_normal_cdf(x) - 0.8, 0.0, 3.0, 1e-12).unwrap();
        assert!((r - 0.8416).abs() < 1e-4);
        assert!((r - 0.841_621_233_572_914_3).abs() < 1e-11);
    }

    #[test]
    fn cube_root() {
        let r = find_root(|x| x * x * x - 2.0, 1.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
        assert!((r - 1.259_921).abs() < 1e-6);
    }

    #[test]
    fn unbracketed_root_is_an_error() {
        let err = find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn endpoint_roots() {
        assert_eq!(find_root(|x| x, 0.0, 1.0, 1e-10).unwrap(), 0.0);
        assert_eq!(find_root(|x| x - 1.0, 0.0, 1.0, 1e-10).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_maximum() {
        let (x, v) = maximize_scalar(|x| -(x - 1.0) * (x - 1.0), 0.0, 3.0, 1e-10);
        assert!((x - 1.0).abs() < 1e-7);
        assert!(v.abs() < 1e-13);
    }

    #[test]
    fn mean_regret_of_sign_rule() {
        let (x, v) = maximize_scalar(|t| t * std_normal_sf(t), 0.0, 5.0, 1e-10);
        assert!((v - 0.1700).abs() < 5e-4);
        assert!((x - 0.751_791_5).abs() < 1e-5);
    }

    #[test]
    fn test_rule_msr_constant() {
        let z = 1.6449;
        let (b, v) = maximize_scalar(|b| b * b * std_normal_cdf(z - b), 0.0, 6.0, 1e-10);
        // Frozen from a 1e-4 grid scan of the same objective.
        assert!((v - 1.4458).abs() < 1e-3, "{v}");
        assert!((b - 1.95).abs() < 0.05, "{b}");
    }

    #[test]
    fn boundary_maximum_and_ties() {
        let (x, v) = maximize_scalar(|x| x, 0.0, 2.0, 1e-10);
        assert_eq!((x, v), (2.0, 2.0));
        let (x, _) = maximize_scalar(|_| 1.0, -1.0, 1.0, 1e-10);
        assert_eq!(x, -1.0);
    }

    #[test]
    fn deterministic() {
        let f = |x: f64| (x * 3.0).sin() + 0.1 * x;
        assert_eq!(
            maximize_scalar(f, 0.0, 1.5, 1e-9),
            maximize_scalar(f, 0.0, 1.5, 1e-9)
        );
        let g = |x: f64| x.cos() - x;
        assert_eq!(
            find_root(g, 0.0, 1.0, 1e-12).unwrap(),
            find_root(g, 0.0, 1.0, 1e-12).unwrap()
        );
    }
}
