//! Standard normal distribution function and quantiles.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Phi(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// 1 - Phi(x), without cancellation in the upper tail.
pub fn survival(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value 2 (1 - Phi(|z|)).
pub fn two_sided_p_value(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// The q-th quantile z_q of the standard normal distribution.
pub fn quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs 0 < q < 1, got {q}"
        )));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    // Phi^{-1}(q) = -sqrt(2) erfc^{-1}(2q)
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    // One Newton step against erfc tightens the last few ulps.
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let resid = if q < 0.5 {
        cdf(z) - q
    } else {
        q - 1.0 + survival(z)
    };
    Ok(z - resid / density)
}
