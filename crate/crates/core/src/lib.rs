//! Treatment-choice rules evaluated under nonlinear regret.
//!
//! The library works in a Gaussian experiment `Ȳ ~ N(τ, σ²/n)` with known `σ`
//! and the untreated mean normalized to zero, so welfare is `τ·δ` and regret is
//! `τ(1{τ ≥ 0} − δ)`. Rules receive the standardized statistic `√n·Ȳ/σ`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod dominance;
pub mod error;
pub mod lfp;
pub mod numerics;
pub mod planning;
pub mod regression;
pub mod reports;
pub mod risk;
pub mod rules;

pub use error::{Error, Result};
pub use numerics::{QuadratureSpec, RngSeed};
pub use risk::{GaussianExperiment, RiskReport, SimulationSummary};
pub use rules::{DiscretePrior, PriorAtom, TreatmentRule};
