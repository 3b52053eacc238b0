//! Standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::distribution::{ContinuousCDF, Normal};

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub(crate) fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Quantile of the standard normal law, `u` in (0,1).
pub(crate) fn normal_quantile(u: f64) -> f64 {
    let x = Normal::new(0.0, 1.0)
        .expect("valid parameters")
        .inverse_cdf(u);
    // one Newton step against the accurate cdf, on the smaller tail
    let step = if x < 0.0 {
        (normal_cdf(x) - u) / normal_pdf(x)
    } else {
        (u - 1.0 + normal_sf(x)) / normal_pdf(x)
    };
    if step.is_finite() {
        x - step
    } else {
        x
    }
}
