//! Posterior excursion probabilities `g(x) = P(ξ(x) > u | data)`, the
//! misclassification probability `τ = min(g, 1 - g)`, and the per-stage loop
//! that adds evaluations until the mean misclassification over the particle
//! cloud drops below a tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpModel, Prediction, RemlSearch};
use crate::normal;
use crate::points::Points;
use crate::problem::CountingEvaluator;

/// A posterior model of the performance function that can be conditioned on
/// new evaluations.
pub trait Surrogate: Sized {
    fn predict(&self, x: &[f64]) -> Result<Prediction>;

    /// Whether `x` coincides with an already evaluated point.
    fn is_design_point(&self, x: &[f64]) -> bool;

    /// The model after observing `f(x) = y`.
    fn update(&self, x: &[f64], y: f64) -> Result<Self>;

    fn predict_all(&self, points: &Points) -> Result<Vec<Prediction>> {
        points.rows().map(|x| self.predict(x)).collect()
    }
}

/// Kriging surrogate that re-estimates its covariance parameters by REML after
/// every new observation.
#[derive(Debug, Clone)]
pub struct KrigingSurrogate {
    pub model: GpModel,
    pub refit: bool,
}

impl KrigingSurrogate {
    pub fn new(model: GpModel, refit: bool) -> Self {
        KrigingSurrogate { model, refit }
    }
}

impl Surrogate for KrigingSurrogate {
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.model.predict(x)
    }

    fn is_design_point(&self, x: &[f64]) -> bool {
        self.model.is_design_point(x)
    }

    fn update(&self, x: &[f64], y: f64) -> Result<Self> {
        let model = if self.refit && !self.model.is_degenerate() {
            // Warm start at the current optimum plus one rotating fresh start.
            let search = RemlSearch::warm(self.model.params(), self.model.len());
            self.model.add_observation_refit(x, y, &search)?
        } else if self.refit {
            let search = RemlSearch::multi_start(self.model.dim(), self.model.params().regularity());
            self.model.add_observation_refit(x, y, &search)?
        } else {
            self.model.add_observation(x, y)?
        };
        Ok(KrigingSurrogate { model, refit: self.refit })
    }
}

/// `Φ((mean - u) / sd)`, or the indicator `mean > u` when the variance is zero.
pub fn excursion_probability(pred: &Prediction, threshold: f64) -> f64 {
    if pred.variance <= 0.0 {
        return if pred.mean > threshold { 1.0 } else { 0.0 };
    }
    normal::cdf((pred.mean - threshold) / pred.sd())
}

/// `ln g`; `-inf` where the excursion probability is exactly zero.
pub fn log_excursion_probability(pred: &Prediction, threshold: f64) -> f64 {
    if pred.variance <= 0.0 {
        return if pred.mean > threshold { 0.0 } else { f64::NEG_INFINITY };
    }
    normal::log_cdf((pred.mean - threshold) / pred.sd())
}

pub fn misclassification_probability(g: f64) -> f64 {
    g.min(1.0 - g)
}

/// A surrogate paired with a threshold `u`.
#[derive(Debug, Clone, Copy)]
pub struct ExcursionQuery<'m, S> {
    pub model: &'m S,
    pub threshold: f64,
}

impl<'m, S: Surrogate> ExcursionQuery<'m, S> {
    pub fn new(model: &'m S, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::invalid("excursion threshold must be finite"));
        }
        Ok(ExcursionQuery { model, threshold })
    }

    pub fn excursion_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(excursion_probability(&self.model.predict(x)?, self.threshold))
    }

    pub fn misclassification(&self, x: &[f64]) -> Result<f64> {
        Ok(misclassification_probability(self.excursion_prob(x)?))
    }

    /// Misclassification probability of every row of `points`.
    pub fn misclassifications(&self, points: &Points) -> Result<Vec<f64>> {
        points.rows().map(|x| self.misclassification(x)).collect()
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Index of the largest `tau` among candidates that are not design points;
/// ties go to the lowest index.
fn argmax_selectable<S: Surrogate>(model: &S, candidates: &Points, tau: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (x, &t)) in candidates.rows().zip(tau).enumerate() {
        if best.is_some_and(|(_, b)| t <= b) {
            continue;
        }
        if model.is_design_point(x) {
            continue;
        }
        best = Some((i, t));
    }
    best.map(|(i, _)| i).ok_or(Error::NoSelectablePoint)
}

/// Greedy maximum-misclassification point selection over `candidates`.
pub fn select_next_point<S: Surrogate>(query: &ExcursionQuery<'_, S>, candidates: &Points) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate points"));
    }
    let tau = query.misclassifications(candidates)?;
    argmax_selectable(query.model, candidates, &tau)
}

/// What the learning loop did during one stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub threshold: f64,
    pub selected: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Mean misclassification on entry and after each evaluation.
    pub mean_tau: Vec<f64>,
}

#[derive(Debug)]
pub struct StageLearning<S> {
    pub model: S,
    pub evaluations: u64,
    pub converged: bool,
    pub trace: LearningTrace,
}

/// A failed learning stage keeps the model as it was before the failing step.
#[derive(Debug)]
pub struct StageFailure<S> {
    pub model: S,
    pub evaluations: u64,
    pub error: Error,
}

/// Adds evaluations chosen by [`select_next_point`] until the mean
/// misclassification over `particles` is at most `eta` or `budget`
/// evaluations have been spent.
pub fn run_stage_learning<S: Surrogate>(
    model: S,
    evaluator: &CountingEvaluator<'_>,
    threshold: f64,
    particles: &Points,
    eta: f64,
    budget: u64,
) -> std::result::Result<StageLearning<S>, StageFailure<S>> {
    let mut model = model;
    let mut evaluations = 0;
    let fail = |model, evaluations, error| StageFailure {
        model,
        evaluations,
        error,
    };
    if !(eta > 0.0) || particles.is_empty() || !threshold.is_finite() {
        return Err(fail(
            model,
            0,
            Error::invalid("stage learning needs eta > 0, a finite threshold and particles"),
        ));
    }
    let mut trace = LearningTrace {
        threshold,
        ..LearningTrace::default()
    };
    loop {
        let tau = match misclassifications(&model, threshold, particles) {
            Ok(t) => t,
            Err(e) => return Err(fail(model, evaluations, e)),
        };
        let mean_tau = mean(&tau);
        trace.mean_tau.push(mean_tau);
        if mean_tau <= eta {
            return Ok(StageLearning {
                model,
                evaluations,
                converged: true,
                trace,
            });
        }
        if evaluations >= budget {
            return Ok(StageLearning {
                model,
                evaluations,
                converged: false,
                trace,
            });
        }
        let idx = match argmax_selectable(&model, particles, &tau) {
            Ok(i) => i,
            Err(e) => return Err(fail(model, evaluations, e)),
        };
        let x = particles.row(idx);
        let y = match evaluator.eval(x) {
            Ok(y) => y,
            Err(e) => return Err(fail(model, evaluations + 1, e)),
        };
        evaluations += 1;
        model = match model.update(x, y) {
            Ok(m) => m,
            Err(e) => return Err(fail(model, evaluations, e)),
        };
        trace.selected.push(x.to_vec());
        trace.values.push(y);
    }
}

fn misclassifications<S: Surrogate>(model: &S, threshold: f64, particles: &Points) -> Result<Vec<f64>> {
    particles
        .rows()
        .map(|x| Ok(misclassification_probability(excursion_probability(&model.predict(x)?, threshold))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{CovarianceParams, Regularity};
    use crate::problem::{InputDistribution, Performance, ReliabilityProblem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Surrogate with prescribed predictions per candidate row, for testing selection.
    struct Table {
        rows: Vec<(Vec<f64>, Prediction)>,
        designs: Vec<Vec<f64>>,
    }

    impl Surrogate for Table {
        fn predict(&self, x: &[f64]) -> Result<Prediction> {
            self.rows
                .iter()
                .find(|(p, _)| p == x)
                .map(|(_, pr)| *pr)
                .ok_or_else(|| Error::Prediction("unknown point".into()))
        }
        fn is_design_point(&self, x: &[f64]) -> bool {
            self.designs.iter().any(|d| d == x)
        }
        fn update(&self, _: &[f64], _: f64) -> Result<Self> {
            unreachable!()
        }
    }

    fn pred_for_tau(tau: f64) -> Prediction {
        // Mean such that g = 1 - tau with unit variance.
        let mut lo = -10.0;
        let mut hi = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if crate::normal::cdf(mid) < tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Prediction {
            mean: -lo,
            variance: 1.0,
        }
    }

    fn table(taus: &[f64]) -> (Table, Points) {
        let rows: Vec<(Vec<f64>, Prediction)> =
            taus.iter().enumerate().map(|(i, t)| (vec![i as f64], pred_for_tau(*t))).collect();
        let pts = Points::from_rows(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>()).unwrap();
        (Table { rows, designs: vec![] }, pts)
    }

    #[test]
    fn excursion_probability_cases() {
        let sure = Prediction { mean: 2.0, variance: 0.0 };
        assert_eq!(excursion_probability(&sure, 1.0), 1.0);
        assert_eq!(excursion_probability(&sure, 3.0), 0.0);
        let at = Prediction { mean: 1.0, variance: 4.0 };
        assert_eq!(excursion_probability(&at, 1.0), 0.5);
        let p = Prediction { mean: 1.6449, variance: 1.0 };
        assert!((excursion_probability(&p, 0.0) - 0.95).abs() < 1e-4);
        assert_eq!(log_excursion_probability(&sure, 3.0), f64::NEG_INFINITY);
    }

    #[test]
    fn misclassification_cases() {
        assert_eq!(misclassification_probability(0.5), 0.5);
        assert_eq!(misclassification_probability(1.0), 0.0);
        assert!((misclassification_probability(0.95) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn excursion_probability_decreases_in_threshold() {
        let preds = [
            Prediction { mean: 0.3, variance: 0.2 },
            Prediction { mean: -1.0, variance: 0.0 },
            Prediction { mean: 5.0, variance: 1e-6 },
        ];
        for p in &preds {
            let mut prev = f64::INFINITY;
            for k in 0..2000 {
                let u = -10.0 + 0.01 * k as f64;
                let g = excursion_probability(p, u);
                assert!((0.0..=1.0).contains(&g));
                assert!(g <= prev + 1e-12);
                let tau = misclassification_probability(g);
                assert!((0.0..=0.5).contains(&tau));
                assert_eq!(tau == 0.0, g == 0.0 || g == 1.0);
                prev = g;
            }
        }
    }

    #[test]
    fn selection_rules() {
        let (t, pts) = table(&[0.01, 0.49, 0.3]);
        let q = ExcursionQuery::new(&t, 0.0).unwrap();
        assert_eq!(select_next_point(&q, &pts).unwrap(), 1);

        let (t, pts) = table(&[0.4, 0.4]);
        let q = ExcursionQuery::new(&t, 0.0).unwrap();
        assert_eq!(select_next_point(&q, &pts).unwrap(), 0);

        let (t, pts) = table(&[0.2]);
        let q = ExcursionQuery::new(&t, 0.0).unwrap();
        assert_eq!(select_next_point(&q, &pts).unwrap(), 0);

        let (mut t, pts) = table(&[0.01, 0.49, 0.3]);
        t.designs.push(vec![1.0]);
        let q = ExcursionQuery::new(&t, 0.0).unwrap();
        assert_eq!(select_next_point(&q, &pts).unwrap(), 2);
        t.designs = vec![vec![0.0], vec![1.0], vec![2.0]];
        let q = ExcursionQuery::new(&t, 0.0).unwrap();
        assert!(matches!(select_next_point(&q, &pts), Err(Error::NoSelectablePoint)));
    }

    fn toy() -> ReliabilityProblem {
        let input = InputDistribution::standard(1).unwrap();
        ReliabilityProblem::new("sine", input, Performance::custom(|x| (2.0 * x[0]).sin() + 0.5 * x[0]), 0.8).unwrap()
    }

    fn toy_model(problem: &ReliabilityProblem) -> KrigingSurrogate {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let designs = Points::from_rows(&xs.iter().map(|x| [*x]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = xs.iter().map(|x| problem.eval_performance(&[*x]).unwrap()).collect();
        let params = CovarianceParams::new(1.0, vec![0.8], Regularity::FiveHalves).unwrap();
        KrigingSurrogate::new(GpModel::new(designs, y, params, vec![1.0]).unwrap(), true)
    }

    #[test]
    fn stage_learning_reaches_eta() {
        let problem = toy();
        let model = toy_model(&problem);
        let particles = problem.input.sample(300, &mut ChaCha8Rng::seed_from_u64(5));
        let ev = CountingEvaluator::new(&problem);
        let out = run_stage_learning(model, &ev, 0.8, &particles, 1e-6, 60).unwrap();
        assert!(out.converged);
        assert_eq!(out.evaluations, ev.calls());
        let tau = misclassifications(&out.model, 0.8, &particles).unwrap();
        assert!(mean(&tau) <= 1e-6);
        let first = out.trace.mean_tau[0];
        let last = *out.trace.mean_tau.last().unwrap();
        assert!(last <= first || last <= 1e-6);
        let steps = out.trace.mean_tau.windows(2).count().max(1);
        let decreasing = out.trace.mean_tau.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(decreasing as f64 >= 0.9 * steps as f64 - 1.0, "{:?}", out.trace.mean_tau);
    }

    #[test]
    fn stage_learning_stops_immediately() {
        let problem = toy();
        let particles = problem.input.sample(100, &mut ChaCha8Rng::seed_from_u64(6));
        let ev = CountingEvaluator::new(&problem);
        // Far above the range of f: every particle is classified with certainty.
        let out = run_stage_learning(toy_model(&problem), &ev, 50.0, &particles, 1e-6, 10).unwrap();
        assert_eq!(out.evaluations, 0);
        assert_eq!(out.model.model.len(), 5);
        let out = run_stage_learning(toy_model(&problem), &ev, 0.8, &particles, 1e-6, 0).unwrap();
        assert_eq!(out.evaluations, 0);
        assert!(!out.converged);
        assert_eq!(ev.calls(), 0);
    }
}
