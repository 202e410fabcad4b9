//! Expectations over normal distributions.
//!
//! Smooth integrands go through Gauss–Hermite quadrature. Each call compares
//! the requested order `k` against `2k`; when they disagree beyond
//! `fallback_abs_tol` the order escalates to 256 and finally to adaptive
//! Simpson on `mean ± 10 sd`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::normal::std_normal_pdf;
use crate::error::{Error, Result};

const MAX_ESCALATED_ORDER: usize = 256;
const SIMPSON_HALF_WIDTH: f64 = 10.0;
const SIMPSON_MAX_DEPTH: u32 = 40;
const SIMPSON_MIN_WIDTH: f64 = 1e-9;

/// Gauss–Hermite order and the tolerance that triggers the adaptive fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    node_count: usize,
    fallback_abs_tol: f64,
}

impl QuadratureSpec {
    pub const MIN_NODES: usize = 16;

    pub fn new(node_count: usize, fallback_abs_tol: f64) -> Result<Self> {
        if node_count < Self::MIN_NODES {
            return Err(Error::Domain(format!(
                "quadrature needs at least {} nodes, got {node_count}",
                Self::MIN_NODES
            )));
        }
        if !(fallback_abs_tol > 0.0 && fallback_abs_tol.is_finite()) {
            return Err(Error::Domain(format!(
                "fallback tolerance must be positive, got {fallback_abs_tol}"
            )));
        }
        Ok(Self {
            node_count,
            fallback_abs_tol,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn fallback_abs_tol(&self) -> f64 {
        self.fallback_abs_tol
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            node_count: 64,
            fallback_abs_tol: 1e-10,
        }
    }
}

/// Nodes and weights for ∫ f(x) e^{−x²} dx.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes the rule from the eigenvalues of the Jacobi matrix, each
    /// polished by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be positive");
        let n = order;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut seeds: Vec<f64> = SymmetricEigen::new(jacobi)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        seeds.sort_by(|a, b| b.total_cmp(a));
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let (z, pp) = polish_hermite_root(n, seeds[i]);
            // Odd orders have an exact zero node.
            let z = if 2 * i + 1 == n { 0.0 } else { z };
            let pp = if 2 * i + 1 == n {
                hermite_derivative(n, 0.0)
            } else {
                pp
            };
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    /// Cached rule of the given order.
    pub fn cached(order: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(order)
            .or_insert_with(|| Arc::new(GaussHermite::new(order)))
            .clone()
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// E[f(X)] for X ~ N(mean, sd²) with this fixed rule.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, mean: f64, sd: f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum();
        sum / std::f64::consts::PI.sqrt()
    }
}

/// Orthonormal Hermite value p_n(z) and p_{n−1}(z).
fn hermite_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

fn hermite_derivative(n: usize, z: f64) -> f64 {
    (2.0 * n as f64).sqrt() * hermite_pair(n, z).1
}

fn polish_hermite_root(n: usize, mut z: f64) -> (f64, f64) {
    let mut pp = hermite_derivative(n, z);
    for _ in 0..20 {
        let (p1, p2) = hermite_pair(n, z);
        pp = (2.0 * n as f64).sqrt() * p2;
        let dz = p1 / pp;
        z -= dz;
        if dz.abs() <= 1e-15 * z.abs().max(1.0) {
            pp = hermite_derivative(n, z);
            break;
        }
    }
    (z, pp)
}

/// E[f(X)] for X ~ N(mean, sd²).
pub fn gaussian_expectation<F: Fn(f64) -> f64>(
    f: F,
    mean: f64,
    sd: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(sd > 0.0 && sd.is_finite()) || !mean.is_finite() {
        return Err(Error::Domain(format!(
            "normal expectation needs finite mean and positive sd, got N({mean}, {sd}^2)"
        )));
    }
    let tol = spec.fallback_abs_tol;
    let k = spec.node_count;
    let mut coarse = GaussHermite::cached(k).expectation(&f, mean, sd);
    let mut order = 2 * k;
    loop {
        let fine = GaussHermite::cached(order).expectation(&f, mean, sd);
        if (fine - coarse).abs() <= tol {
            return Ok(fine);
        }
        if order >= MAX_ESCALATED_ORDER {
            break;
        }
        coarse = fine;
        order = (2 * order).min(MAX_ESCALATED_ORDER);
    }
    adaptive_simpson_normal(&f, mean, sd, tol)
}

/// Adaptive Simpson of f(x)·N(x | mean, sd²) on [mean − 10sd, mean + 10sd].
fn adaptive_simpson_normal<F: Fn(f64) -> f64>(f: &F, mean: f64, sd: f64, tol: f64) -> Result<f64> {
    // Integrate in standardized units; the density is φ(z).
    let g = |z: f64| f(mean + sd * z) * std_normal_pdf(z);
    // Split into unit panels so that narrow features are not skipped by the
    // first Simpson estimate.
    let panels = (2.0 * SIMPSON_HALF_WIDTH) as usize;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let a = -SIMPSON_HALF_WIDTH + i as f64;
        let b = a + 1.0;
        let fa = g(a);
        let fb = g(b);
        let m = 0.5 * (a + b);
        let fm = g(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(&g, a, b, fa, fm, fb, whole, panel_tol, SIMPSON_MAX_DEPTH)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<G: Fn(f64) -> f64>(
    g: &G,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = g(lm);
    let frm = g(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Convergence(format!(
            "integrand is not finite on [{a}, {b}]"
        )));
    }
    // Panels narrower than SIMPSON_MIN_WIDTH only occur at jumps of the
    // integrand, where the remaining error is bounded by width · sup|g|.
    if delta.abs() <= 15.0 * tol || b - a < SIMPSON_MIN_WIDTH {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Convergence(format!(
            "adaptive Simpson exhausted its depth on [{a}, {b}] (error estimate {:e})",
            delta.abs() / 15.0
        )));
    }
    Ok(
        simpson_step(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_step(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}
