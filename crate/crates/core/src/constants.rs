//! Shipped numerical constants.

/// Least-favorable prior location for mean square regret, rounded to six
/// significant digits from `lfp::solve_tau_star`.
pub const TAU_STAR: f64 = 1.22814;
