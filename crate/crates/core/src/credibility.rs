//! Variance of a risk estimate, its relative error bound at a confidence
//! level, and the sample size needed to reach a target bound.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::risk::{RiskMatrices, Strategy};

/// Below this many nonzero contributions the normal approximation is suspect.
pub const MIN_NONZERO: usize = 30;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CredibilityReport {
    pub risk: f64,
    /// Variance of the estimator, MW².
    pub variance: f64,
    /// Sample variance of the per-sample contributions, MW².
    pub per_sample_variance: f64,
    /// Relative half-width; absent when the risk is zero.
    pub epsilon_hat: Option<f64>,
    pub beta: f64,
    pub interval: [f64; 2],
    /// Samples needed for `eps_bar`; absent when the risk is zero.
    pub required_n: Option<u64>,
    pub n: u64,
    pub eps_bar: f64,
    /// `z·sqrt(variance)`, MW.
    pub absolute_half_width: f64,
    pub nonzero_samples: u64,
    pub max_contribution: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("quantile probability {prob} must lie in (0, 1)")));
    }
    Ok(Normal::standard().inverse_cdf(prob))
}

fn two_sided(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("confidence level {beta} must lie in (0, 1)")));
    }
    normal_quantile((1.0 + beta) / 2.0)
}

/// `(D̂, d̂)` from the nonzero contributions of an `n`-sample estimate.
pub fn variance_from_contributions(nonzero: &[f64], n: usize, risk: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let squares: f64 = nonzero.iter().map(|l| (l - risk) * (l - risk)).sum();
    let zeros = (n - nonzero.len()) as f64;
    let d = (squares + zeros * risk * risk) / (n - 1) as f64;
    Ok((d / n as f64, d))
}

pub fn estimate_variance(m: &RiskMatrices, s: &Strategy, risk: f64) -> Result<(f64, f64)> {
    let l = m.contributions(&m.rows(s)?);
    variance_from_contributions(&l, m.n(), risk)
}

pub fn relative_error_bound(risk: f64, variance: f64, beta: f64) -> Result<f64> {
    if !(risk > 0.0) {
        return Err(Error::ZeroRisk);
    }
    if !(variance >= 0.0) {
        return Err(Error::Domain(format!("variance {variance} must be >= 0")));
    }
    Ok(two_sided(beta)? * variance.sqrt() / risk)
}

pub fn required_samples(per_sample_variance: f64, risk: f64, beta: f64, eps_bar: f64) -> Result<u64> {
    if !(risk > 0.0) {
        return Err(Error::ZeroRisk);
    }
    if !(eps_bar > 0.0) {
        return Err(Error::Domain(format!("target relative error {eps_bar} must be > 0")));
    }
    let z = two_sided(beta)?;
    let n = (per_sample_variance / (risk * risk) * (z / eps_bar).powi(2)).ceil();
    Ok(if n >= 1.0 { n as u64 } else { 1 })
}

/// Full report for one strategy's estimate.
pub fn credibility(m: &RiskMatrices, s: &Strategy, beta: f64, eps_bar: f64) -> Result<CredibilityReport> {
    let z = two_sided(beta)?;
    let l = m.contributions(&m.rows(s)?);
    let n = m.n();
    let risk = if n == 0 { 0.0 } else { l.iter().sum::<f64>() / n as f64 };
    let (variance, per_sample_variance) = variance_from_contributions(&l, n, risk)?;
    let nonzero = l.iter().filter(|v| **v > 0.0).count();
    let half = z * variance.sqrt();
    let mut warnings = Vec::new();
    if nonzero < MIN_NONZERO {
        let msg = format!("only {nonzero} samples contribute to the estimate; the normal interval may be unreliable");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let (epsilon_hat, interval, required_n) = if risk > 0.0 {
        let eps = half / risk;
        let req = required_samples(per_sample_variance, risk, beta, eps_bar)?;
        (Some(eps), [(1.0 - eps) * risk, (1.0 + eps) * risk], Some(req))
    } else {
        (None, [risk - half, risk + half], None)
    };
    Ok(CredibilityReport {
        risk,
        variance,
        per_sample_variance,
        epsilon_hat,
        beta,
        interval,
        required_n,
        n: n as u64,
        eps_bar,
        absolute_half_width: half,
        nonzero_samples: nonzero as u64,
        max_contribution: l.iter().copied().fold(0.0, f64::max),
        warnings,
    })
}
