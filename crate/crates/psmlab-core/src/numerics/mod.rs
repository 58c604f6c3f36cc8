//! Deterministic numerical kernel shared by every other module.

pub mod linalg;
pub mod rng;
pub mod stats;

pub use linalg::{covariance_matrix, solve_spd, Cholesky, Matrix, SpdMatrix};
pub use rng::RandomStream;
pub use stats::{mean, sample_sd, sample_variance};

/// Numerically stable logistic function.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

/// log(p / (1 - p)).
pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

pub(crate) fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, x| if x.abs() > m { x.abs() } else { m })
}
