//! Kriging with a constant unknown mean and a Matérn covariance.
//!
//! Inputs are divided by a per-coordinate `input_scale` (the input standard
//! deviations in practice) before the lengthscales apply, so lengthscales are
//! expressed in standardized units.

mod kernel;
mod nelder_mead;
mod reml;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

pub use kernel::{matern_cov, scaled_distance, CovarianceParams, Regularity};
pub use reml::{fit_reml, RemlFit, RemlSearch, LENGTHSCALE_BOUNDS, VARIANCE_BOUNDS};

use crate::error::{Error, Result};
use crate::points::Points;

/// Two design points closer than this (standardized Euclidean distance) are duplicates.
pub const DUPLICATE_RADIUS: f64 = 1e-6;

/// Relative nugget added to the correlation diagonal, escalated ×10 on
/// Cholesky failure up to [`MAX_JITTER`].
pub const INITIAL_JITTER: f64 = 1e-10;
pub const MAX_JITTER: f64 = 1e-4;

/// Posterior variances below this multiple of `jitter · σ²` are numerical
/// noise and reported as exactly zero.
const VARIANCE_NOISE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Correlation matrix of `scaled` points plus the smallest nugget in the
/// escalation ladder that makes it positive definite.
pub(crate) fn factorize(scaled: &Points, regularity: Regularity) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let n = scaled.len();
    let mut corr = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let r = euclidean(scaled.row(i), scaled.row(j));
            let c = regularity.correlation(r);
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    let mut jitter = INITIAL_JITTER;
    while jitter <= MAX_JITTER * (1.0 + 1e-9) {
        let mut m = corr.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = m.cholesky() {
            return Some((chol, jitter));
        }
        jitter *= 10.0;
    }
    None
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn scale_points(points: &Points, input_scale: &[f64], lengthscales: &[f64]) -> Points {
    let mut out = Points::with_capacity(points.dim(), points.len());
    let mut buf = vec![0.0; points.dim()];
    for row in points.rows() {
        for (j, v) in row.iter().enumerate() {
            buf[j] = v / (input_scale[j] * lengthscales[j]);
        }
        out.push(&buf).expect("same dim");
    }
    out
}

/// Conditioned kriging model. Immutable: [`GpModel::add_observation`] returns a new model.
#[derive(Debug, Clone)]
pub struct GpModel {
    designs: Points,
    observations: Vec<f64>,
    params: CovarianceParams,
    input_scale: Vec<f64>,
    degenerate: bool,

    scaled: Points,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    beta: f64,
    alpha: DVector<f64>,
    r_inv_one: DVector<f64>,
    one_r_inv_one: f64,
}

/// Serialized form of a [`GpModel`]; the factorization is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpState {
    pub designs: Points,
    pub observations: Vec<f64>,
    pub params: CovarianceParams,
    pub input_scale: Vec<f64>,
    #[serde(default)]
    pub degenerate: bool,
}

impl GpModel {
    pub fn new(designs: Points, observations: Vec<f64>, params: CovarianceParams, input_scale: Vec<f64>) -> Result<Self> {
        Self::build(designs, observations, params, input_scale, false)
    }

    /// Fits the covariance parameters by REML, then conditions on the data.
    pub fn fit(designs: Points, observations: Vec<f64>, input_scale: Vec<f64>, search: &RemlSearch) -> Result<Self> {
        let fit = fit_reml(&designs, &observations, &input_scale, search)?;
        Self::build(designs, observations, fit.params, input_scale, fit.degenerate)
    }

    fn build(
        designs: Points,
        observations: Vec<f64>,
        params: CovarianceParams,
        input_scale: Vec<f64>,
        degenerate: bool,
    ) -> Result<Self> {
        let n = designs.len();
        let d = designs.dim();
        if n < 2 {
            return Err(Error::invalid("a kriging model needs at least two observations"));
        }
        if observations.len() != n {
            return Err(Error::invalid(format!("{n} designs but {} observations", observations.len())));
        }
        if params.dim() != d || input_scale.len() != d {
            return Err(Error::invalid("parameter, scale and design dimensions disagree"));
        }
        if input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("input scales must be finite and positive"));
        }
        if designs.as_flat().iter().chain(&observations).any(|v| !v.is_finite()) {
            return Err(Error::invalid("designs and observations must be finite"));
        }
        for i in 1..n {
            for j in 0..i {
                if standardized_distance(designs.row(i), designs.row(j), &input_scale) < DUPLICATE_RADIUS {
                    return Err(Error::DuplicatePoint(designs.row(i).to_vec()));
                }
            }
        }

        let scaled = scale_points(&designs, &input_scale, params.lengthscales());
        let (chol, jitter) = factorize(&scaled, params.regularity()).ok_or_else(|| {
            Error::Prediction("covariance matrix not positive definite after jitter escalation".into())
        })?;
        let y = DVector::from_column_slice(&observations);
        let r_inv_one = chol.solve(&DVector::from_element(n, 1.0));
        let one_r_inv_one = r_inv_one.sum();
        let beta = r_inv_one.dot(&y) / one_r_inv_one;
        let alpha = chol.solve(&y.add_scalar(-beta));
        if !(one_r_inv_one.is_finite() && one_r_inv_one > 0.0 && beta.is_finite()) {
            return Err(Error::Prediction("ill-conditioned kriging system".into()));
        }

        Ok(GpModel {
            designs,
            observations,
            params,
            input_scale,
            degenerate,
            scaled,
            chol,
            jitter,
            beta,
            alpha,
            r_inv_one,
            one_r_inv_one,
        })
    }

    pub fn dim(&self) -> usize {
        self.designs.dim()
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn designs(&self) -> &Points {
        &self.designs
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn params(&self) -> &CovarianceParams {
        &self.params
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    /// Set when REML found constant observations and fell back to a floor variance.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Generalized least-squares estimate of the constant mean.
    pub fn mean_estimate(&self) -> f64 {
        self.beta
    }

    /// Posterior mean and variance at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, model has {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate in {x:?}")));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let n = self.len();
        let ls = self.params.lengthscales();
        let xs: Vec<f64> = x
            .iter()
            .zip(&self.input_scale)
            .zip(ls)
            .map(|((v, s), l)| v / (s * l))
            .collect();
        let reg = self.params.regularity();
        let mut k = DVector::<f64>::zeros(n);
        for i in 0..n {
            k[i] = reg.correlation(euclidean(&xs, self.scaled.row(i)));
        }
        let mean = self.beta + k.dot(&self.alpha);
        let u = 1.0 - self.r_inv_one.dot(&k);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut k);
        let reduction = k.norm_squared();
        let sigma2 = self.params.variance();
        let mut variance = sigma2 * (1.0 - reduction + u * u / self.one_r_inv_one);
        if !(variance > VARIANCE_NOISE_FACTOR * self.jitter * sigma2) {
            variance = 0.0;
        }
        Prediction { mean, variance }
    }

    pub fn predict_many(&self, points: &Points) -> Result<Vec<Prediction>> {
        points.rows().map(|x| self.predict(x)).collect()
    }

    /// Whether `x` lies within [`DUPLICATE_RADIUS`] of an existing design point.
    pub fn is_design_point(&self, x: &[f64]) -> bool {
        self.designs
            .rows()
            .any(|d| standardized_distance(d, x, &self.input_scale) < DUPLICATE_RADIUS)
    }

    /// Conditions on one more observation, keeping the covariance parameters.
    pub fn add_observation(&self, x: &[f64], y: f64) -> Result<GpModel> {
        if x.len() != self.dim() {
            return Err(Error::invalid("observation point has the wrong dimension"));
        }
        if self.is_design_point(x) {
            return Err(Error::DuplicatePoint(x.to_vec()));
        }
        let (designs, observations) = self.extended(x, y)?;
        Self::build(designs, observations, self.params.clone(), self.input_scale.clone(), self.degenerate)
    }

    /// Adds an observation and re-estimates the covariance parameters.
    pub fn add_observation_refit(&self, x: &[f64], y: f64, search: &RemlSearch) -> Result<GpModel> {
        if self.is_design_point(x) {
            return Err(Error::DuplicatePoint(x.to_vec()));
        }
        let (designs, observations) = self.extended(x, y)?;
        Self::fit(designs, observations, self.input_scale.clone(), search)
    }

    fn extended(&self, x: &[f64], y: f64) -> Result<(Points, Vec<f64>)> {
        let mut designs = self.designs.clone();
        designs.push(x)?;
        let mut observations = self.observations.clone();
        observations.push(y);
        Ok((designs, observations))
    }

    pub fn state(&self) -> GpState {
        GpState {
            designs: self.designs.clone(),
            observations: self.observations.clone(),
            params: self.params.clone(),
            input_scale: self.input_scale.clone(),
            degenerate: self.degenerate,
        }
    }

    pub fn from_state(state: GpState) -> Result<Self> {
        Self::build(state.designs, state.observations, state.params, state.input_scale, state.degenerate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.state()).expect("state is always serializable")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let state: GpState = serde_json::from_str(json).map_err(|e| Error::invalid(format!("model JSON: {e}")))?;
        Self::from_state(state)
    }
}

fn standardized_distance(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    scaled_distance(a, b, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(v: f64, ls: &[f64]) -> CovarianceParams {
        CovarianceParams::new(v, ls.to_vec(), Regularity::FiveHalves).unwrap()
    }

    fn random_model(seed: u64, n: usize) -> GpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
        GpModel::new(Points::from_rows(&rows).unwrap(), y, params(1.3, &[0.4, 0.6]), vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn interpolates_design_points() {
        let m = random_model(1, 25);
        let scale = m.observations().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (x, y) in m.designs().rows().zip(m.observations()) {
            let p = m.predict(x).unwrap();
            assert!((p.mean - y).abs() <= 1e-6 * scale, "{} vs {y}", p.mean);
            assert!(p.variance <= 1e-8 * m.params().variance());
        }
    }

    #[test]
    fn two_point_system_matches_hand_solve() {
        let x0 = [0.0, 0.0];
        let x1 = [0.3, 0.4];
        let y = [1.0, 2.0];
        let p = params(2.0, &[1.0, 1.0]);
        let m = GpModel::new(Points::from_rows(&[x0, x1]).unwrap(), y.to_vec(), p.clone(), vec![1.0, 1.0]).unwrap();
        let target = [0.6, 0.1];

        // Correlation-scale 2×2 solve with the same nugget.
        let rho = |a: &[f64], b: &[f64]| matern_cov(a, b, &p) / 2.0;
        let nug = m.jitter();
        let (a, b, d) = (1.0 + nug, rho(&x0, &x1), 1.0 + nug);
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let mul = |v: [f64; 2]| [inv[0][0] * v[0] + inv[0][1] * v[1], inv[1][0] * v[0] + inv[1][1] * v[1]];
        let ri1 = mul([1.0, 1.0]);
        let s = ri1[0] + ri1[1];
        let beta = (ri1[0] * y[0] + ri1[1] * y[1]) / s;
        let resid = mul([y[0] - beta, y[1] - beta]);
        let k = [rho(&target, &x0), rho(&target, &x1)];
        let mean = beta + k[0] * resid[0] + k[1] * resid[1];
        let rik = mul(k);
        let u = 1.0 - (rik[0] + rik[1]);
        let var = 2.0 * (1.0 - (k[0] * rik[0] + k[1] * rik[1]) + u * u / s);

        let pred = m.predict(&target).unwrap();
        assert!((pred.mean - mean).abs() < 1e-12, "{} vs {mean}", pred.mean);
        assert!((pred.variance - var).abs() < 1e-12, "{} vs {var}", pred.variance);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let m = random_model(2, 20);
        let p = m.predict(&[30.0, -25.0]).unwrap();
        let n = m.len() as f64;
        let s2 = m.params().variance();
        // Far away the only remaining uncertainty besides σ² is the mean estimate.
        let expected = s2 * (1.0 + 1.0 / m.one_r_inv_one);
        assert!((p.variance - expected).abs() <= 0.05 * expected);
        assert!(p.variance >= s2);
        let emp = m.observations().iter().sum::<f64>() / n;
        assert!((p.mean - emp).abs() <= 3.0 * p.sd());
    }

    #[test]
    fn add_observation_matches_rebuild() {
        let m = random_model(3, 15);
        let x = [0.55, 0.45];
        let m2 = m.add_observation(&x, 0.7).unwrap();
        assert_eq!(m2.len(), m.len() + 1);
        assert!((m2.predict(&x).unwrap().mean - 0.7).abs() < 1e-6 * 0.7);

        let mut designs = m.designs().clone();
        designs.push(&x).unwrap();
        let mut obs = m.observations().to_vec();
        obs.push(0.7);
        let rebuilt = GpModel::new(designs, obs, m.params().clone(), vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t = [rng.random::<f64>(), rng.random::<f64>()];
            let a = m2.predict(&t).unwrap();
            let b = rebuilt.predict(&t).unwrap();
            assert!((a.mean - b.mean).abs() < 1e-8 && (a.variance - b.variance).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicates_and_small_models_rejected() {
        let m = random_model(4, 5);
        let x = m.designs().row(2).to_vec();
        assert!(matches!(m.add_observation(&x, 1.0), Err(Error::DuplicatePoint(_))));
        let one = Points::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(GpModel::new(one, vec![1.0], params(1.0, &[1.0, 1.0]), vec![1.0, 1.0]).is_err());
        let dup = Points::from_rows(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            GpModel::new(dup, vec![1.0, 2.0], params(1.0, &[1.0, 1.0]), vec![1.0, 1.0]),
            Err(Error::DuplicatePoint(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = random_model(5, 8);
        let back = GpModel::from_json(&m.to_json()).unwrap();
        let t = [0.2, 0.9];
        assert_eq!(m.predict(&t).unwrap(), back.predict(&t).unwrap());
        assert!(GpModel::from_json("{}").is_err());
        assert!(GpModel::from_json(r#"{"designs":[[0,0],[1,1]],"observations":[1],"params":{"variance":1,"lengthscales":[1,1]},"input_scale":[1,1]}"#).is_err());
    }

    #[test]
    fn covariance_is_spd_on_random_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.random_range(2..60);
            let rows: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let pts = Points::from_rows(&rows).unwrap();
            for reg in [Regularity::Half, Regularity::ThreeHalves, Regularity::FiveHalves] {
                let scaled = scale_points(&pts, &[1.0; 3], &[0.5, 2.0, 1.0]);
                assert!(factorize(&scaled, reg).is_some());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn variance_never_increases_under_conditioning(
            seed in 0u64..1000,
            x in prop::array::uniform2(-0.5f64..1.5),
            new in prop::array::uniform2(-0.5f64..1.5),
            y in -3.0f64..3.0,
        ) {
            let m = random_model(seed, 12);
            prop_assume!(!m.is_design_point(&new));
            let before = m.predict(&x).unwrap().variance;
            let after = m.add_observation(&new, y).unwrap().predict(&x).unwrap().variance;
            prop_assert!(after <= before + 1e-9, "{after} > {before}");
        }

        #[test]
        fn mean_is_linear_in_observations(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let m = random_model(seed, 10);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let y1: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
            let y2: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
            let combo: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
            let with = |y: Vec<f64>| GpModel::new(m.designs().clone(), y, m.params().clone(), vec![1.0, 1.0]).unwrap();
            let (m1, m2, m3) = (with(y1), with(y2), with(combo));
            let t = [rng.random::<f64>(), rng.random::<f64>()];
            let lhs = m3.predict(&t).unwrap().mean;
            let rhs = a * m1.predict(&t).unwrap().mean + b * m2.predict(&t).unwrap().mean;
            prop_assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
