//! Restricted maximum likelihood for the Matérn parameters.
//!
//! The constant mean is integrated out and the variance is profiled
//! analytically, so the simplex search only runs over log-lengthscales.

use nalgebra::DVector;

use super::kernel::{CovarianceParams, Regularity};
use super::{factorize, nelder_mead, scale_points};
use crate::error::{Error, Result};
use crate::points::Points;

/// Lengthscale search box in standardized input units.
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
/// Variance search box relative to the sample variance of the observations.
pub const VARIANCE_BOUNDS: (f64, f64) = (1e-6, 1e6);

const DEGENERATE_VARIANCE: f64 = 1e-10;
const BOUNDARY_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RemlSearch {
    pub regularity: Regularity,
    /// Starting lengthscales (standardized units), one vector per start.
    pub starts: Vec<Vec<f64>>,
    pub max_evals_per_start: usize,
}

impl RemlSearch {
    /// The seven fixed starting points: isotropic at 0.1, 0.3, 1, 3, 10 and
    /// two alternating anisotropic patterns.
    pub fn default_starts(dim: usize) -> Vec<Vec<f64>> {
        let iso = |l: f64| vec![l; dim];
        let alt = |a: f64, b: f64| (0..dim).map(|j| if j % 2 == 0 { a } else { b }).collect();
        vec![iso(1.0), iso(0.3), iso(3.0), iso(0.1), iso(10.0), alt(0.3, 3.0), alt(3.0, 0.3)]
    }

    pub fn multi_start(dim: usize, regularity: Regularity) -> Self {
        RemlSearch {
            regularity,
            starts: Self::default_starts(dim),
            max_evals_per_start: 400,
        }
    }

    /// Warm start at `previous` plus one of the default starts, cycling with `round`.
    pub fn warm(previous: &CovarianceParams, round: usize) -> Self {
        let defaults = Self::default_starts(previous.dim());
        let fresh = defaults[round % defaults.len()].clone();
        RemlSearch {
            regularity: previous.regularity(),
            starts: vec![previous.lengthscales().to_vec(), fresh],
            max_evals_per_start: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemlFit {
    pub params: CovarianceParams,
    /// Constant observations: the variance is a floor value and lengthscales are defaults.
    pub degenerate: bool,
    /// Negative restricted log-likelihood at the optimum, up to an additive constant.
    pub objective: f64,
}

struct Objective<'a> {
    designs: &'a Points,
    y: DVector<f64>,
    input_scale: &'a [f64],
    regularity: Regularity,
    var_bounds: (f64, f64),
}

impl Objective<'_> {
    fn clamp(log_ls: &[f64]) -> (Vec<f64>, f64) {
        let (lo, hi) = (LENGTHSCALE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.1.ln());
        let mut excess = 0.0;
        let ls = log_ls
            .iter()
            .map(|&v| {
                let c = v.clamp(lo, hi);
                excess += (v - c) * (v - c);
                c.exp()
            })
            .collect();
        (ls, excess)
    }

    /// Returns the objective and the profiled variance at the clamped lengthscales.
    fn eval(&self, log_ls: &[f64]) -> (f64, f64) {
        let (ls, excess) = Self::clamp(log_ls);
        let n = self.y.len();
        let scaled = scale_points(self.designs, self.input_scale, &ls);
        let Some((chol, _)) = factorize(&scaled, self.regularity) else {
            return (f64::INFINITY, f64::NAN);
        };
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let r_inv_one = chol.solve(&DVector::from_element(n, 1.0));
        let s = r_inv_one.sum();
        let beta = r_inv_one.dot(&self.y) / s;
        let mut resid = self.y.add_scalar(-beta);
        chol.l_dirty().solve_lower_triangular_mut(&mut resid);
        let q = resid.norm_squared();
        let dof = (n - 1) as f64;
        let sigma2 = (q / dof).clamp(self.var_bounds.0, self.var_bounds.1);
        let value = 0.5 * (dof * sigma2.ln() + q / sigma2 + log_det + s.ln()) + BOUNDARY_PENALTY * excess;
        if value.is_finite() {
            (value, sigma2)
        } else {
            (f64::INFINITY, f64::NAN)
        }
    }
}

/// Maximizes the restricted likelihood over `(σ², ℓ)` by multi-start simplex
/// search on log-lengthscales with `σ²` profiled out.
pub fn fit_reml(designs: &Points, observations: &[f64], input_scale: &[f64], search: &RemlSearch) -> Result<RemlFit> {
    let n = designs.len();
    let d = designs.dim();
    if n < d + 2 {
        return Err(Error::invalid(format!("REML needs at least d + 2 = {} observations, got {n}", d + 2)));
    }
    if observations.len() != n || input_scale.len() != d {
        return Err(Error::invalid("design, observation and scale sizes disagree"));
    }
    if observations.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("observations must be finite"));
    }
    if search.starts.is_empty() || search.starts.iter().any(|s| s.len() != d) {
        return Err(Error::invalid("REML starts must be non-empty and match the input dimension"));
    }

    let mean = observations.iter().sum::<f64>() / n as f64;
    let sample_var = observations.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if observations.iter().all(|v| *v == observations[0]) || sample_var == 0.0 {
        let variance = DEGENERATE_VARIANCE * mean.abs().max(1.0).powi(2);
        return Ok(RemlFit {
            params: CovarianceParams::new(variance, vec![1.0; d], search.regularity)?,
            degenerate: true,
            objective: f64::NAN,
        });
    }

    let objective = Objective {
        designs,
        y: DVector::from_column_slice(observations),
        input_scale,
        regularity: search.regularity,
        var_bounds: (VARIANCE_BOUNDS.0 * sample_var, VARIANCE_BOUNDS.1 * sample_var),
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &search.starts {
        let x0: Vec<f64> = start.iter().map(|l| l.max(f64::MIN_POSITIVE).ln()).collect();
        let m = nelder_mead::minimize(|x| objective.eval(x).0, &x0, 1.0, search.max_evals_per_start, 1e-10);
        if m.value.is_finite() && best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (log_ls, _) = best.ok_or_else(|| {
        Error::Fit("covariance matrix not positive definite after jitter escalation at every start".into())
    })?;
    let (ls, _) = Objective::clamp(&log_ls);
    let clamped_log: Vec<f64> = ls.iter().map(|l| l.ln()).collect();
    let (value, sigma2) = objective.eval(&clamped_log);
    if !value.is_finite() {
        return Err(Error::Fit("restricted likelihood is not finite at the optimum".into()));
    }
    Ok(RemlFit {
        params: CovarianceParams::new(sigma2, ls, search.regularity)?,
        degenerate: false,
        objective: value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::matern_cov;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn grid_design(seed: u64, n: usize) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        Points::from_rows(&rows).unwrap()
    }

    /// Exact draw from the GP prior via a Cholesky factor of the covariance matrix.
    fn simulate(designs: &Points, truth: &CovarianceParams, seed: u64) -> Vec<f64> {
        let n = designs.len();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = matern_cov(designs.row(i), designs.row(j), truth);
            }
            k[(i, i)] += 1e-10;
        }
        let l = k.cholesky().unwrap().unpack();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (l * z).iter().copied().collect()
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = CovarianceParams::new(1.0, vec![0.3, 0.3], Regularity::FiveHalves).unwrap();
        let search = RemlSearch::multi_start(2, Regularity::FiveHalves);
        let mut hits = 0;
        for seed in 0..20 {
            let designs = grid_design(100 + seed, 60);
            let y = simulate(&designs, &truth, seed);
            let fit = fit_reml(&designs, &y, &[1.0, 1.0], &search).unwrap();
            let ok = (fit.params.variance().ln() - 0.0).abs() <= 0.7
                && fit
                    .params
                    .lengthscales()
                    .iter()
                    .all(|l| (l.ln() - 0.3f64.ln()).abs() <= 0.7);
            hits += ok as usize;
        }
        assert!(hits >= 16, "recovered truth in only {hits}/20 seeds");
    }

    #[test]
    fn shift_and_scale_equivariance() {
        let truth = CovarianceParams::new(1.0, vec![0.4, 0.25], Regularity::FiveHalves).unwrap();
        let designs = grid_design(7, 30);
        let y = simulate(&designs, &truth, 7);
        let search = RemlSearch::multi_start(2, Regularity::FiveHalves);
        let base = fit_reml(&designs, &y, &[1.0, 1.0], &search).unwrap();

        let shifted: Vec<f64> = y.iter().map(|v| v + 12.5).collect();
        let fs = fit_reml(&designs, &shifted, &[1.0, 1.0], &search).unwrap();
        assert!((fs.params.variance() / base.params.variance() - 1.0).abs() < 1e-4);
        for (a, b) in fs.params.lengthscales().iter().zip(base.params.lengthscales()) {
            assert!((a / b - 1.0).abs() < 1e-4, "{a} vs {b}");
        }

        let c = 3.0;
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let fc = fit_reml(&designs, &scaled, &[1.0, 1.0], &search).unwrap();
        assert!((fc.params.variance() / (c * c * base.params.variance()) - 1.0).abs() < 1e-4);
        for (a, b) in fc.params.lengthscales().iter().zip(base.params.lengthscales()) {
            assert!((a / b - 1.0).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_observations_are_degenerate() {
        let designs = grid_design(3, 6);
        let fit = fit_reml(&designs, &[2.0; 6], &[1.0, 1.0], &RemlSearch::multi_start(2, Regularity::FiveHalves)).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.params.lengthscales(), &[1.0, 1.0]);
    }

    #[test]
    fn too_few_observations() {
        let designs = grid_design(3, 3);
        let r = fit_reml(&designs, &[1.0, 2.0, 3.0], &[1.0, 1.0], &RemlSearch::multi_start(2, Regularity::FiveHalves));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn input_scale_standardizes_lengthscales() {
        let truth = CovarianceParams::new(1.0, vec![0.3, 0.3], Regularity::FiveHalves).unwrap();
        let designs = grid_design(11, 40);
        let y = simulate(&designs, &truth, 11);
        let search = RemlSearch::multi_start(2, Regularity::FiveHalves);
        let unit = fit_reml(&designs, &y, &[1.0, 1.0], &search).unwrap();
        let stretched_rows: Vec<[f64; 2]> = designs.rows().map(|r| [r[0] * 1e-4, r[1] * 50.0]).collect();
        let stretched = Points::from_rows(&stretched_rows).unwrap();
        let fit = fit_reml(&stretched, &y, &[1e-4, 50.0], &search).unwrap();
        for (a, b) in fit.params.lengthscales().iter().zip(unit.params.lengthscales()) {
            assert!((a / b - 1.0).abs() < 1e-3, "{a} vs {b}");
        }
    }
}
