//! Standard normal distribution.
//!
//! The CDF is `0.5 * erfc(-x / sqrt(2))` with `erfc` from `libm` (the
//! FreeBSD msun algorithm, sub-ulp rational approximations on each
//! interval). Using `erfc` rather than `1 + erf` keeps full relative accuracy
//! in the lower tail.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}
