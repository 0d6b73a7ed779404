//! Univariate and bivariate standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::quadrature;

/// Φ(x) via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

const BVN_TOL: f64 = 1e-11;

/// P(X ≤ a, Y ≤ b) for standard normals with correlation `rho`.
///
/// Uses the one-dimensional reduction
/// `Φ₂ = Φ(a)Φ(b) + (2π)⁻¹ ∫₀^{asin ρ} exp(-(a² + b² - 2ab sin t) / (2cos² t)) dt`.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(Error::InvalidRho(rho));
    }
    if a.is_nan() || b.is_nan() {
        return Ok(f64::NAN);
    }
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if a == f64::INFINITY {
        return Ok(std_normal_cdf(b));
    }
    if b == f64::INFINITY {
        return Ok(std_normal_cdf(a));
    }
    if rho == 1.0 {
        return Ok(std_normal_cdf(a.min(b)));
    }
    if rho == -1.0 {
        return Ok((std_normal_cdf(a) - std_normal_cdf(-b)).max(0.0));
    }
    let base = std_normal_cdf(a) * std_normal_cdf(b);
    if rho == 0.0 {
        return Ok(base);
    }
    let s2 = a * a + b * b;
    let ab2 = 2.0 * a * b;
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            return 0.0;
        }
        (-(s2 - ab2 * s) / (2.0 * c2)).exp()
    };
    let integral = quadrature::integrate(f, 0.0, rho.asin(), BVN_TOL);
    Ok((base + integral / (2.0 * PI)).clamp(0.0, 1.0))
}
