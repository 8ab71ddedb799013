use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Inputs to a sample-size calculation for a correlation test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSpec {
    rho: f64,
    alpha: f64,
    power: f64,
}

impl PowerSpec {
    pub fn new(rho: f64, alpha: f64, power: f64) -> Result<Self> {
        if rho.is_nan() || rho.abs() >= 1.0 || rho == 0.0 {
            return Err(Error::Input(format!("rho must lie in (-1, 1) and be non-zero, got {rho}")));
        }
        for (name, v) in [("alpha", alpha), ("power", power)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Input(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self { rho, alpha, power })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn power(&self) -> f64 {
        self.power
    }
}

/// Converts a correlation coefficient to Cohen's d: `2r / sqrt(1 - r^2)`.
pub fn correlation_to_cohens_d(r: f64) -> Result<f64> {
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(Error::Input(format!("|r| must be below 1, got {r}")));
    }
    Ok(2.0 * r / (1.0 - r * r).sqrt())
}

/// Number of paired observations needed to detect correlation `rho` with a
/// two-sided test, via the Fisher-z approximation
/// `n = ((z_{1-a/2} + z_{power}) / atanh|rho|)^2 + 3`, rounded half-up.
pub fn required_sample_size(spec: &PowerSpec) -> usize {
    let std = Normal::standard();
    let z_alpha = std.inverse_cdf(1.0 - spec.alpha / 2.0);
    let z_power = std.inverse_cdf(spec.power);
    let n = ((z_alpha + z_power) / spec.rho.abs().atanh()).powi(2) + 3.0;
    (n + 0.5).floor() as usize
}

/// Common-language effect size: the probability `Phi(d / sqrt 2)`.
pub fn cohen_d_to_probability(d: f64) -> Result<f64> {
    if !d.is_finite() {
        return Err(Error::Input(format!("effect size must be finite, got {d}")));
    }
    Ok(Normal::standard().cdf(d / std::f64::consts::SQRT_2))
}
