use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{maximin_design_indices, solve_threshold_from_predictions, EstimateReport, Method, PopulationSnapshot, StageRecord};
use crate::error::{Error, Result};
use crate::excursion::{
    excursion_probability, log_excursion_probability, mean, misclassification_probability, run_stage_learning,
    KrigingSurrogate, Surrogate,
};
use crate::gp::{GpModel, Prediction, Regularity, RemlSearch};
use crate::points::Points;
use crate::problem::{CountingEvaluator, ReliabilityProblem};
use crate::smc::{compute_weights, multinomial_resample, mwg_move, MoveConfig, ParticlePopulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BssConfig {
    /// Particles per stage.
    pub m: usize,
    /// Target conditional probability per stage.
    pub p0: f64,
    /// Initial maximin design size.
    pub n0: usize,
    /// Misclassification tolerance for intermediate stages.
    pub eta_intermediate: f64,
    /// Misclassification tolerance at the failure threshold.
    pub eta_final: f64,
    /// Maximum evaluations per stage.
    pub stage_budget: u64,
    pub max_stages: usize,
    /// Metropolis-within-Gibbs passes per move; they cost predictions only.
    pub sweeps: usize,
    /// Random-walk scales; defaults to the input standard deviations.
    pub proposal_sds: Option<Vec<f64>>,
    pub regularity: Regularity,
    /// Re-estimate covariance parameters after every evaluation.
    pub refit: bool,
    /// Keep learning traces and population snapshots in the report.
    pub trace: bool,
}

impl Default for BssConfig {
    fn default() -> Self {
        BssConfig {
            m: 1000,
            p0: 0.1,
            n0: 10,
            eta_intermediate: 1e-6,
            eta_final: 1e-7,
            stage_budget: 100,
            max_stages: 20,
            sweeps: 20,
            proposal_sds: None,
            regularity: Regularity::FiveHalves,
            refit: true,
            trace: false,
        }
    }
}

impl BssConfig {
    pub fn validate(&self, dims: usize) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::invalid("p0 must lie in (0, 1)"));
        }
        if !(self.eta_final > 0.0 && self.eta_final <= self.eta_intermediate) {
            return Err(Error::invalid("need 0 < eta_final <= eta_intermediate"));
        }
        if self.n0 < dims + 2 {
            return Err(Error::invalid(format!("n0 must be at least d + 2 = {}", dims + 2)));
        }
        if self.m < self.n0.max(2) {
            return Err(Error::invalid("m must be at least n0"));
        }
        if self.max_stages == 0 || self.sweeps == 0 {
            return Err(Error::invalid("max_stages and sweeps must be positive"));
        }
        Ok(())
    }
}

/// Posterior-mean estimate `mean_i g(Y_i)` of `P(f > threshold)` from a sample of the inputs.
pub fn compute_bayes_alpha<S: Surrogate>(model: &S, threshold: f64, mc_sample: &Points) -> Result<f64> {
    if mc_sample.is_empty() {
        return Err(Error::invalid("empty Monte Carlo sample"));
    }
    let total = mc_sample
        .rows()
        .map(|x| Ok(excursion_probability(&model.predict(x)?, threshold)))
        .sum::<Result<f64>>()?;
    Ok(total / mc_sample.len() as f64)
}

/// Bayesian subset simulation with a kriging surrogate fitted by REML.
pub fn bayesian_subsim<R: Rng + ?Sized>(problem: &ReliabilityProblem, config: &BssConfig, rng: &mut R) -> Result<EstimateReport> {
    let scale = problem.input.sds().to_vec();
    let regularity = config.regularity;
    let refit = config.refit;
    bayesian_subsim_with(problem, config, rng, |designs, obs| {
        let search = RemlSearch::multi_start(designs.dim(), regularity);
        let model = GpModel::fit(designs.clone(), obs.to_vec(), scale.clone(), &search)?;
        Ok(KrigingSurrogate::new(model, refit))
    })
}

fn stage_err(stage: usize, ev: &CountingEvaluator<'_>, e: Error) -> Error {
    Error::Stage {
        stage,
        evaluations: ev.calls(),
        source: Box::new(e),
    }
}

/// Bayesian subset simulation over any [`Surrogate`]; `build` turns the
/// evaluated initial design into the starting model.
///
/// Stage `t` solves for the level `u_t` that makes the stage factor equal to
/// `p0`, adds evaluations until the mean misclassification over the particles
/// is below `eta`, re-solves `u_t` with the updated model, records the factor
/// `mean_i g_t(Y_i) / g_{t-1}(Y_i)`, then resamples and moves the particles
/// towards `p_X · g_t` (no performance-function calls). Stops at `u_T = u`.
pub fn bayesian_subsim_with<S, R, B>(
    problem: &ReliabilityProblem,
    config: &BssConfig,
    rng: &mut R,
    build: B,
) -> Result<EstimateReport>
where
    S: Surrogate,
    R: Rng + ?Sized,
    B: FnOnce(&Points, &[f64]) -> Result<S>,
{
    config.validate(problem.dims())?;
    let move_config = MoveConfig::new(
        config.proposal_sds.clone().unwrap_or_else(|| problem.input.sds().to_vec()),
        config.sweeps,
    )?;
    if move_config.proposal_sds.len() != problem.dims() {
        return Err(Error::invalid("proposal_sds must have one entry per input"));
    }
    let ev = CountingEvaluator::new(problem);
    let u_final = problem.failure_threshold;
    let m = config.m;

    let mut particles = problem.input.sample(m, rng);
    let doe = maximin_design_indices(&particles, config.n0, problem.input.sds())?;
    let designs = particles.select(&doe);
    let observations = designs.rows().map(|x| ev.eval(x)).collect::<Result<Vec<f64>>>()?;
    let mut model = build(&designs, &observations)?;

    let mut report = EstimateReport::new(Method::Bss);
    report.initial_design = ev.calls();
    let mut prev_g = vec![1.0; m];
    let mut estimate = 1.0;

    for stage in 1..=config.max_stages {
        let start = ev.calls();
        let initial = model.predict_all(&particles).map_err(|e| stage_err(stage, &ev, e))?;
        let mut level =
            solve_threshold_from_predictions(&initial, &prev_g, u_final, config.p0).map_err(|e| stage_err(stage, &ev, e))?;

        // Learn at the solved level and re-solve with the updated model until
        // the tolerance holds at the level actually used or the budget runs out.
        let mut preds;
        loop {
            let eta = if level == u_final {
                config.eta_final
            } else {
                config.eta_intermediate
            };
            let budget = config.stage_budget.saturating_sub(ev.calls() - start);
            let learned = run_stage_learning(model, &ev, level, &particles, eta, budget).map_err(|f| Error::Stage {
                stage,
                evaluations: ev.calls(),
                source: Box::new(f.error),
            })?;
            model = learned.model;
            let spent = learned.evaluations;
            if config.trace {
                report.learning.push(learned.trace);
            }
            preds = model.predict_all(&particles).map_err(|e| stage_err(stage, &ev, e))?;
            let resolved = solve_threshold_from_predictions(&preds, &prev_g, u_final, config.p0)
                .map_err(|e| stage_err(stage, &ev, e))?;
            let moved = resolved != level;
            level = resolved;
            if spent == 0 || !moved || ev.calls() - start >= config.stage_budget {
                break;
            }
        }
        let g: Vec<f64> = preds.iter().map(|p| excursion_probability(p, level)).collect();
        let mean_tau = mean(&g.iter().map(|&v| misclassification_probability(v)).collect::<Vec<_>>());
        let (weights, factor) = compute_weights(&g, &prev_g).map_err(|e| stage_err(stage, &ev, e))?;
        estimate *= factor;
        report.stages.push(StageRecord {
            stage,
            threshold: level,
            factor,
            evaluations: ev.calls() - start,
            mean_tau,
        });

        if level == u_final {
            report.estimate = estimate;
            report.total_evaluations = ev.calls();
            return Ok(report);
        }

        let pop = ParticlePopulation::weighted(particles, weights, stage - 1).map_err(|e| stage_err(stage, &ev, e))?;
        if config.trace {
            report.snapshots.push(PopulationSnapshot {
                stage,
                points: pop.points().clone(),
                weights: pop.weights().to_vec(),
            });
        }
        let resampled = multinomial_resample(&pop, rng).map_err(|e| stage_err(stage, &ev, e))?;
        let target = |x: &[f64]| {
            let prior = problem.input.logpdf_unchecked(x);
            match model.predict(x) {
                Ok(p) => prior + log_excursion_probability(&p, level),
                Err(_) => f64::NAN,
            }
        };
        let (moved, _) = mwg_move(&resampled, target, &move_config, rng).map_err(|e| stage_err(stage + 1, &ev, e))?;
        particles = moved.into_points();
        prev_g = model
            .predict_all(&particles)
            .map_err(|e| stage_err(stage + 1, &ev, e))?
            .iter()
            .map(|p: &Prediction| excursion_probability(p, level))
            .collect();
    }

    report.estimate = estimate;
    report.total_evaluations = ev.calls();
    Err(Error::NonConvergence {
        stages: config.max_stages,
        partial: Box::new(report),
    })
}
