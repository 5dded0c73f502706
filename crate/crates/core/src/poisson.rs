use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// `ln P(x; lambda)` for the Poisson law, with `P(0; 0) = 1` and `P(x; 0) = 0`
/// for `x > 0`.
pub fn log_poisson_pmf(x: u64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeRate(lambda));
    }
    Ok(log_pmf_unchecked(x, lambda))
}

#[inline]
pub(crate) fn log_pmf_unchecked(x: u64, lambda: f64) -> f64 {
    if x == 0 {
        -lambda
    } else if lambda == 0.0 {
        f64::NEG_INFINITY
    } else {
        x as f64 * lambda.ln() - lambda - ln_factorial(x)
    }
}
