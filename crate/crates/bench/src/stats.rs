//! Replication statistics: absolute relative bias and coefficient of variation.

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub replications: usize,
    /// `E(α̂)`, the sample mean of the estimates.
    pub mean: f64,
    /// `δ(α̂)`, the sample standard deviation (divisor `R - 1`); absent for `R = 1`.
    pub sd: Option<f64>,
    pub reference: f64,
    /// `|E(α̂) - α| / α`.
    pub kappa: f64,
    /// `δ(α̂) / α`.
    pub cov: Option<f64>,
    /// `δ(α̂) / E(α̂)`.
    pub cov_self: Option<f64>,
}

/// Sample mean and, for two or more values, sample standard deviation.
pub fn sample_moments(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Some((mean, sd))
}

pub fn compute_stats(estimates: &[f64], reference: f64) -> Result<ReplicationStats> {
    if !(reference.is_finite() && reference > 0.0) {
        return Err(BenchError::Config(format!("reference must be positive, got {reference}")));
    }
    if estimates.iter().any(|e| !e.is_finite()) {
        return Err(BenchError::Config("estimates must be finite".into()));
    }
    let (mean, sd) = sample_moments(estimates).ok_or_else(|| BenchError::Config("no estimates".into()))?;
    Ok(ReplicationStats {
        replications: estimates.len(),
        mean,
        sd,
        reference,
        kappa: ((mean - reference) / reference).abs(),
        cov: sd.map(|s| s / reference),
        cov_self: sd.and_then(|s| (mean != 0.0).then(|| s / mean)),
    })
}

/// Binomial standard error `sqrt(α̂ (1 - α̂) / m)` of a single crude Monte Carlo run.
pub fn binomial_se(estimate: f64, m: u64) -> f64 {
    (estimate * (1.0 - estimate) / m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_equal_to_reference() {
        let s = compute_stats(&[2.0; 5], 2.0).unwrap();
        assert_eq!((s.kappa, s.cov), (0.0, Some(0.0)));
    }

    #[test]
    fn two_values_by_hand() {
        let s = compute_stats(&[3.0, 5.0], 4.0).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.kappa, 0.0);
        assert!((s.sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.cov.unwrap() - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn published_subsim_row() {
        // E = 3.9078e-5 and δ = 2.470e-5 against 3.85e-5: κ = 1.5%, cov = 64.2%.
        let (e, d, a) = (3.9078e-5, 2.470e-5, 3.85e-5);
        let s = compute_stats(&[e - d / 2f64.sqrt(), e + d / 2f64.sqrt()], a).unwrap();
        assert!((s.kappa - 0.015).abs() < 5e-4);
        assert!((s.cov.unwrap() - 0.642).abs() < 5e-4);
    }

    #[test]
    fn single_replication_has_no_spread() {
        let s = compute_stats(&[1.0], 2.0).unwrap();
        assert_eq!((s.sd, s.cov, s.cov_self), (None, None, None));
        assert_eq!(s.kappa, 0.5);
    }

    #[test]
    fn invalid_inputs() {
        assert!(compute_stats(&[1.0], 0.0).is_err());
        assert!(compute_stats(&[1.0], -1.0).is_err());
        assert!(compute_stats(&[], 1.0).is_err());
        assert!(compute_stats(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn binomial_standard_error() {
        assert!((binomial_se(0.5, 100) - 0.05).abs() < 1e-15);
        assert_eq!(binomial_se(0.0, 10), 0.0);
    }

    proptest! {
        #[test]
        fn permutation_invariant(v in prop::collection::vec(1e-6f64..1.0, 2..30), seed in any::<u64>()) {
            let mut w = v.clone();
            let n = w.len();
            for i in (1..n).rev() {
                w.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
            }
            let (a, b) = (compute_stats(&v, 0.3).unwrap(), compute_stats(&w, 0.3).unwrap());
            prop_assert!((a.mean - b.mean).abs() <= 1e-14 * a.mean.abs().max(1e-300));
            prop_assert!((a.sd.unwrap() - b.sd.unwrap()).abs() <= 1e-12 * a.sd.unwrap().max(1e-12));
            prop_assert!(a.kappa >= 0.0 && a.cov.unwrap() >= 0.0);
        }
    }
}
