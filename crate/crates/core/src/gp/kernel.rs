use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness index `ν` of the Matérn family, restricted to the half-integer
/// values that have closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Regularity {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[default]
    #[serde(rename = "5/2")]
    FiveHalves,
}

impl Regularity {
    /// Matérn correlation at scaled distance `r >= 0`.
    #[inline]
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Regularity::Half => (-r).exp(),
            Regularity::ThreeHalves => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Regularity::FiveHalves => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

impl std::str::FromStr for Regularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1/2" | "0.5" => Ok(Regularity::Half),
            "3/2" | "1.5" => Ok(Regularity::ThreeHalves),
            "5/2" | "2.5" => Ok(Regularity::FiveHalves),
            _ => Err(Error::invalid(format!("unsupported Matérn regularity {s:?}"))),
        }
    }
}

/// Matérn covariance parameters: variance `σ²`, one lengthscale per input
/// coordinate and the regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct CovarianceParams {
    variance: f64,
    lengthscales: Vec<f64>,
    #[serde(default)]
    regularity: Regularity,
}

#[derive(Deserialize)]
struct RawParams {
    variance: f64,
    lengthscales: Vec<f64>,
    #[serde(default)]
    regularity: Regularity,
}

impl TryFrom<RawParams> for CovarianceParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        CovarianceParams::new(raw.variance, raw.lengthscales, raw.regularity)
    }
}

impl CovarianceParams {
    pub fn new(variance: f64, lengthscales: Vec<f64>, regularity: Regularity) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid(format!("covariance variance must be positive, got {variance}")));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("lengthscales must be finite and positive"));
        }
        Ok(CovarianceParams {
            variance,
            lengthscales,
            regularity,
        })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// Anisotropic Euclidean distance `sqrt(Σ ((x_j - y_j) / ℓ_j)²)`.
pub fn scaled_distance(x: &[f64], y: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Matérn covariance `σ² ρ_ν(r)` between two points.
pub fn matern_cov(x: &[f64], y: &[f64], params: &CovarianceParams) -> f64 {
    let r = scaled_distance(x, y, &params.lengthscales);
    params.variance * params.regularity.correlation(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let p = CovarianceParams::new(1.0, vec![1.0, 1.0], Regularity::FiveHalves).unwrap();
        assert_eq!(matern_cov(&[0.3, 0.4], &[0.3, 0.4], &p), 1.0);
        let v = matern_cov(&[0.0, 0.0], &[0.6, 0.8], &p);
        let s5 = 5f64.sqrt();
        let expected = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.52399).abs() < 1e-5);
        assert!(matern_cov(&[0.0, 0.0], &[1e3, 0.0], &p) < 1e-300);
    }

    #[test]
    fn anisotropy_and_variance() {
        let p = CovarianceParams::new(2.5, vec![2.0, 0.5], Regularity::ThreeHalves).unwrap();
        let r: f64 = ((1.0f64 / 2.0).powi(2) + (1.0f64 / 0.5).powi(2)).sqrt();
        let s3 = 3f64.sqrt() * r;
        let expected = 2.5 * (1.0 + s3) * (-s3).exp();
        assert!((matern_cov(&[0.0, 0.0], &[1.0, 1.0], &p) - expected).abs() < 1e-14);
        let half = CovarianceParams::new(1.0, vec![1.0], Regularity::Half).unwrap();
        assert!((matern_cov(&[0.0], &[2.0], &half) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CovarianceParams::new(0.0, vec![1.0], Regularity::Half).is_err());
        assert!(CovarianceParams::new(1.0, vec![0.0], Regularity::Half).is_err());
        assert!(CovarianceParams::new(1.0, vec![], Regularity::Half).is_err());
        assert!(serde_json::from_str::<CovarianceParams>(r#"{"variance":-1,"lengthscales":[1]}"#).is_err());
    }
}
