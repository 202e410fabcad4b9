use thiserror::Error;

/// Errors raised by the numerical routines and rule constructions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or iterative scheme failed to meet its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Root finding was started on an interval whose endpoints share a sign.
    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// The posterior puts no mass on one side of zero, so the Bayes first-order
    /// condition has no interior root.
    #[error("posterior mass is one-sided: {0}")]
    PriorSupport(String),

    /// The least-favorable-prior saddle check failed.
    #[error(
        "saddle violated at tau* = {tau_star}: |bayes - worst| = {gap:e}, argsup = {argsup_tau}, \
         max excess over risk at tau* = {max_excess:e}"
    )]
    SaddleViolation {
        tau_star: f64,
        gap: f64,
        argsup_tau: f64,
        max_excess: f64,
    },

    /// The fractional rule failed to dominate the threshold rule at some state.
    #[error("dominance fails at tau = {tau}: margin = {margin:e}")]
    DominanceViolation { tau: f64, margin: f64 },

    /// The regression design matrix does not have full column rank.
    #[error("rank deficient design: {0}")]
    Rank(String),

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
