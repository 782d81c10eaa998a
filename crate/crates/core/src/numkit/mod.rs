//! Numerical kernel: normal special functions, random streams, optimizer, least squares.

pub mod linalg;
pub mod optim;
pub mod rng;
pub mod special;

pub use linalg::{least_squares, spd_inverse, LeastSquaresFit};
pub use optim::{
    minimize, numerical_gradient, numerical_hessian, MinimizeSettings, Objective, OptimResult,
    WithGradient,
};
pub use rng::{derive_seed, mix64, MixtureComponent, RngStream};
pub use special::{
    bivariate_normal_cdf, inverse_mills, log_cdf_and_hazard, log_normal_cdf, normal_cdf,
    normal_pdf, normal_quantile, normal_sf, Z_975,
};

/// Logistic function 1 / (1 + e^(−x)), stable for large |x|.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eˣ) without overflow.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
