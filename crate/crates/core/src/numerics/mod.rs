//! Special functions, quadrature, scalar solvers and seeded random streams.

mod normal;
mod optimize;
mod quadrature;
mod rng;

pub use normal::{
    std_normal_cdf, std_normal_interval, std_normal_pdf, std_normal_quantile, std_normal_sf,
};
pub use optimize::{find_root, maximize_scalar};
pub use quadrature::{gaussian_expectation, GaussHermite, QuadratureSpec};
pub use rng::RngSeed;

/// Numerically stable logistic function 1 / (1 + e^{−x}).
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
