//! Treatment fractions from a normal regression with a binary treatment.
//!
//! Model: `Y = τD + β′X + e`, `e ~ N(0, σ²)`. OLS gives `τ̂` and its standard
//! error; the feasible rules read the t-statistic `τ̂/se(τ̂)`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::TAU_STAR;
use crate::error::{Error, Result};
use crate::numerics::RngSeed;
use crate::rules::TreatmentRule;

/// A column whose QR pivot falls below this fraction of its norm is treated as
/// linearly dependent on the earlier columns.
const RANK_TOL: f64 = 1e-10;

/// Outcomes, binary treatments and covariates (intercept included if wanted).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcomes: Vec<f64>,
    treatments: Vec<f64>,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        outcomes: Vec<f64>,
        treatments: Vec<f64>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = outcomes.len();
        if treatments.len() != n || covariates.nrows() != n {
            return Err(Error::Input(format!(
                "length mismatch: {n} outcomes, {} treatments, {} covariate rows",
                treatments.len(),
                covariates.nrows()
            )));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::Input(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.ncols()
            )));
        }
        if let Some(i) = treatments.iter().position(|&d| d != 0.0 && d != 1.0) {
            return Err(Error::Input(format!(
                "row {}: treatment must be 0 or 1, got {}",
                i + 1,
                treatments[i]
            )));
        }
        if let Some(i) = outcomes.iter().position(|y| !y.is_finite()) {
            return Err(Error::Input(format!(
                "row {}: outcome is not finite",
                i + 1
            )));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("covariates must be finite".into()));
        }
        let k = 1 + covariates.ncols();
        if n <= k {
            return Err(Error::Input(format!(
                "need more than {k} rows for {k} regressors, got {n}"
            )));
        }
        Ok(Self {
            outcomes,
            treatments,
            covariates,
            covariate_names,
        })
    }

    /// Data with an intercept as the only covariate.
    pub fn with_intercept(outcomes: Vec<f64>, treatments: Vec<f64>) -> Result<Self> {
        let n = outcomes.len();
        Self::new(
            outcomes,
            treatments,
            DMatrix::from_element(n, 1, 1.0),
            vec!["intercept".into()],
        )
    }

    /// Treatment as the only regressor.
    pub fn without_covariates(outcomes: Vec<f64>, treatments: Vec<f64>) -> Result<Self> {
        let n = outcomes.len();
        Self::new(outcomes, treatments, DMatrix::zeros(n, 0), Vec::new())
    }

    /// Reads CSV with a header row. Columns `y` and `d` are required; every
    /// other column is a numeric covariate. An intercept column is appended
    /// when `intercept` is true.
    pub fn from_csv_reader<R: Read>(reader: R, intercept: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Input(format!("reading CSV header: {e}")))?
            .clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Input(format!("missing required column '{name}'")))
        };
        let (yi, di) = (find("y")?, find("d")?);
        let cov_idx: Vec<usize> = (0..headers.len()).filter(|&j| j != yi && j != di).collect();
        let mut names: Vec<String> = cov_idx.iter().map(|&j| headers[j].to_string()).collect();
        let (mut ys, mut ds, mut xs) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            // Row numbers count the header as line 1.
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Input(format!("line {line}: {e}")))?;
            let cell = |j: usize| -> Result<f64> {
                let raw = rec.get(j).unwrap_or("");
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Input(format!(
                            "line {line}, column '{}': expected a number, got '{raw}'",
                            &headers[j]
                        ))
                    })
            };
            ys.push(cell(yi)?);
            let d = cell(di)?;
            if d != 0.0 && d != 1.0 {
                return Err(Error::Input(format!(
                    "line {line}, column 'd': treatment must be 0 or 1, got '{}'",
                    rec.get(di).unwrap_or("")
                )));
            }
            ds.push(d);
            for &j in &cov_idx {
                xs.push(cell(j)?);
            }
            if intercept {
                xs.push(1.0);
            }
        }
        let k = cov_idx.len() + usize::from(intercept);
        if intercept {
            names.push("intercept".into());
        }
        let x = DMatrix::from_row_slice(ys.len(), k, &xs);
        Self::new(ys, ds, x, names)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, intercept: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("opening {}: {e}", path.display())))?;
        Self::from_csv_reader(file, intercept)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// `[D | X]`.
    fn design(&self) -> DMatrix<f64> {
        let n = self.len();
        let k = self.covariates.ncols();
        DMatrix::from_fn(n, k + 1, |i, j| {
            if j == 0 {
                self.treatments[i]
            } else {
                self.covariates[(i, j - 1)]
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tau_star: f64,
    /// Divide the residual sum of squares by `n − k` instead of `n`.
    pub unbiased_variance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tau_star: TAU_STAR,
            unbiased_variance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub n: usize,
    pub tau_hat: f64,
    pub beta_hat: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub sigma2_hat: f64,
    pub se_tau: f64,
    pub t_stat: f64,
    pub tau_star: f64,
    pub delta_minimax: f64,
    pub delta_bayes: f64,
    /// Largest `|z_jᵀe| / (‖z_j‖·‖e‖)` over regressor columns `z_j`.
    pub residual_orthogonality: f64,
}

/// OLS fit with the default options.
pub fn fit(ds: &Dataset) -> Result<RegressionResult> {
    fit_with(ds, &FitOptions::default())
}

/// OLS by Householder QR of the design matrix.
pub fn fit_with(ds: &Dataset, opts: &FitOptions) -> Result<RegressionResult> {
    if !(opts.tau_star > 0.0 && opts.tau_star.is_finite()) {
        return Err(Error::Domain(format!(
            "tau_star must be positive, got {}",
            opts.tau_star
        )));
    }
    let z = ds.design();
    let (n, k) = z.shape();
    let y = DVector::from_column_slice(&ds.outcomes);
    let qr = z.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = z.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            let name = if j == 0 {
                "d"
            } else {
                ds.covariate_names[j - 1].as_str()
            };
            return Err(Error::Rank(format!(
                "column '{name}' is a linear combination of the preceding columns"
            )));
        }
    }
    let qty = qr.q().transpose() * &y;
    let theta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Rank("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Rank("triangular inverse failed".into()))?;
    // (ZᵀZ)⁻¹ = R⁻¹R⁻ᵀ, whose (0,0) entry is the squared norm of row 0 of R⁻¹.
    let v11 = r_inv.row(0).norm_squared();
    let resid = &y - &z * &theta;
    let rss = resid.norm_squared();
    let divisor = if opts.unbiased_variance {
        (n - k) as f64
    } else {
        n as f64
    };
    let sigma2_hat = rss / divisor;
    // Residuals at rounding level mean the outcomes are fitted exactly.
    if !(rss > (1e-12 * y.norm()).powi(2)) {
        return Err(Error::Input(
            "residual variance is zero; the t-statistic is undefined".into(),
        ));
    }
    let se_tau = (sigma2_hat * v11).sqrt();
    let tau_hat = theta[0];
    let t_stat = tau_hat / se_tau;
    let (delta_minimax, delta_bayes) = fraction_from_tstat(t_stat, opts.tau_star);
    let resid_norm = resid.norm();
    let residual_orthogonality = (0..k)
        .map(|j| z.column(j).dot(&resid).abs() / (z.column(j).norm() * resid_norm))
        .fold(0.0, f64::max);
    Ok(RegressionResult {
        n,
        tau_hat,
        beta_hat: theta.iter().skip(1).copied().collect(),
        covariate_names: ds.covariate_names.clone(),
        sigma2_hat,
        se_tau,
        t_stat,
        tau_star: opts.tau_star,
        delta_minimax,
        delta_bayes,
        residual_orthogonality,
    })
}

/// Feasible minimax and flat-prior Bayes fractions at t-statistic `t`.
pub fn fraction_from_tstat(t: f64, tau_star: f64) -> (f64, f64) {
    (
        TreatmentRule::minimax(tau_star).evaluate(t),
        TreatmentRule::BayesFlatMsr { scale: 1.0 }.evaluate(t),
    )
}

/// Draws `n` rows from `Y = τD + β′X + σe` with `D ~ Bernoulli(½)`,
/// `X = (1, x₁, …)` and `x_j, e ~ N(0, 1)`; `beta[0]` is the intercept.
pub fn simulate_dataset(
    n: usize,
    tau: f64,
    beta: &[f64],
    sigma: f64,
    seed: RngSeed,
    index: u64,
) -> Result<Dataset> {
    if beta.is_empty() {
        return Err(Error::Domain("beta must include an intercept".into()));
    }
    let mut rng = seed.substream(index);
    let coin = Bernoulli::new(0.5).map_err(|e| Error::Domain(e.to_string()))?;
    let k = beta.len();
    let mut x = DMatrix::from_element(n, k, 1.0);
    let (mut ys, mut ds) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let d = if coin.sample(&mut rng) { 1.0 } else { 0.0 };
        let mut mean = tau * d + beta[0];
        for j in 1..k {
            let v: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = v;
            mean += beta[j] * v;
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        ys.push(mean + sigma * e);
        ds.push(d);
    }
    let mut names = vec!["intercept".to_string()];
    names.extend((1..k).map(|j| format!("x{j}")));
    Dataset::new(ys, ds, x, names)
}
