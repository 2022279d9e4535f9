//! Reliability problems: an input distribution, a performance function and a
//! failure threshold. Failure is the event `f(X) > u`.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::normal;
use crate::points::Points;

/// Product of independent normal marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct InputDistribution {
    means: Vec<f64>,
    sds: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl TryFrom<RawDistribution> for InputDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        InputDistribution::new(raw.means, raw.sds)
    }
}

impl InputDistribution {
    pub fn new(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::invalid("input distribution needs at least one dimension"));
        }
        if means.len() != sds.len() {
            return Err(Error::invalid(format!(
                "{} means but {} standard deviations",
                means.len(),
                sds.len()
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        if sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("standard deviations must be finite and positive"));
        }
        Ok(InputDistribution { means, sds })
    }

    /// `d` independent standard normals.
    pub fn standard(dims: usize) -> Result<Self> {
        InputDistribution::new(vec![0.0; dims], vec![1.0; dims])
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    /// `n` i.i.d. draws, one per row.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Points {
        let mut data = Vec::with_capacity(n * self.dims());
        for _ in 0..n {
            for (m, s) in self.means.iter().zip(&self.sds) {
                let z: f64 = rng.sample(StandardNormal);
                data.push(m + s * z);
            }
        }
        Points::from_flat(self.dims(), data).expect("dims >= 1")
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.logpdf_unchecked(x))
    }

    /// Log-density without validation; NaN in gives NaN out.
    pub fn logpdf_unchecked(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(xi, (m, s))| normal::log_pdf((xi - m) / s) - s.ln())
            .sum()
    }

    /// Log-density of coordinate `j` alone; `j` must be in range.
    pub fn marginal_logpdf(&self, j: usize, v: f64) -> f64 {
        normal::log_pdf((v - self.means[j]) / self.sds[j]) - self.sds[j].ln()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dims()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate in {x:?}")));
        }
        Ok(())
    }
}

/// Sample from the input distribution of `problem`.
pub fn sample_input<R: Rng + ?Sized>(dist: &InputDistribution, n: usize, rng: &mut R) -> Result<Points> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Ok(dist.sample(n, rng))
}

type PerformanceFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// The deterministic performance function `f`.
#[derive(Clone)]
pub enum Performance {
    /// Deflection margin of a cantilever beam under uniform load,
    /// `18.46154 - 7.476923e10 * x1 / x2^3`.
    Cantilever,
    /// Parsed arithmetic expression in the variables `x1, ..., xd`.
    Expression(Expr),
    /// Arbitrary Rust closure.
    Custom(Arc<PerformanceFn>),
}

impl Performance {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Performance::Custom(Arc::new(f))
    }

    fn call(&self, x: &[f64]) -> f64 {
        match self {
            Performance::Cantilever => cantilever(x[0], x[1]),
            Performance::Expression(e) => e.eval(x),
            Performance::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Performance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Performance::Cantilever => f.write_str("Cantilever"),
            Performance::Expression(e) => write!(f, "Expression({e})"),
            Performance::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

pub fn cantilever(x1: f64, x2: f64) -> f64 {
    18.46154 - 7.476923e10 * x1 / (x2 * x2 * x2)
}

#[derive(Debug, Clone)]
pub struct ReliabilityProblem {
    pub name: String,
    pub input: InputDistribution,
    pub performance: Performance,
    pub failure_threshold: f64,
}

impl ReliabilityProblem {
    pub fn new(
        name: impl Into<String>,
        input: InputDistribution,
        performance: Performance,
        failure_threshold: f64,
    ) -> Result<Self> {
        if !failure_threshold.is_finite() {
            return Err(Error::invalid("failure threshold must be finite"));
        }
        match &performance {
            Performance::Cantilever if input.dims() != 2 => {
                return Err(Error::invalid("the cantilever function takes two inputs"));
            }
            Performance::Expression(e) if e.arity() > input.dims() => {
                return Err(Error::invalid(format!(
                    "expression uses x{} but the input has {} dimensions",
                    e.arity(),
                    input.dims()
                )));
            }
            _ => {}
        }
        Ok(ReliabilityProblem {
            name: name.into(),
            input,
            performance,
            failure_threshold,
        })
    }

    /// Cantilever beam test case: `x1 ~ N(0.001, 0.0002²)`, `x2 ~ N(250, 37.5²)`, `u = 17.8`.
    pub fn cantilever() -> Self {
        let input = InputDistribution::new(vec![0.001, 250.0], vec![0.0002, 37.5]).expect("valid");
        ReliabilityProblem::new("cantilever", input, Performance::Cantilever, 17.8).expect("valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "cantilever" => Some(ReliabilityProblem::cantilever()),
            _ => None,
        }
    }

    pub fn dims(&self) -> usize {
        self.input.dims()
    }

    pub fn with_threshold(mut self, u: f64) -> Result<Self> {
        if !u.is_finite() {
            return Err(Error::invalid("failure threshold must be finite"));
        }
        self.failure_threshold = u;
        Ok(self)
    }

    /// Uncounted evaluation of `f`. Estimators go through [`CountingEvaluator`].
    pub fn eval_performance(&self, x: &[f64]) -> Result<f64> {
        self.input.check_point(x)?;
        let value = self.performance.call(x);
        if !value.is_finite() {
            return Err(Error::Evaluation {
                point: x.to_vec(),
                value,
            });
        }
        Ok(value)
    }
}

/// Wraps a problem and counts every call to the performance function.
#[derive(Debug)]
pub struct CountingEvaluator<'a> {
    problem: &'a ReliabilityProblem,
    calls: AtomicU64,
}

impl<'a> CountingEvaluator<'a> {
    pub fn new(problem: &'a ReliabilityProblem) -> Self {
        CountingEvaluator {
            problem,
            calls: AtomicU64::new(0),
        }
    }

    pub fn problem(&self) -> &'a ReliabilityProblem {
        self.problem
    }

    /// Counts the call even when the evaluation fails.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.problem.eval_performance(x)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
