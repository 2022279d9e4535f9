use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{solve_threshold_from_predictions, EstimateReport, Method, PopulationSnapshot, StageRecord};
use crate::error::{Error, Result};
use crate::gp::Prediction;
use crate::problem::{CountingEvaluator, ReliabilityProblem};
use crate::smc::{
    chain_lengths, compute_weights, constrained_mwg_move, metropolis_chains, multinomial_indices, ChainKernel, MoveConfig,
    ParticlePopulation,
};

/// How the particles above a level are turned into the next population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveScheme {
    /// Every particle above the level seeds a Metropolis chain; the chains
    /// together hold `m` states.
    #[default]
    Chains,
    /// Multinomial resampling to `m` particles, then fixed-scan
    /// Metropolis-within-Gibbs on the indicator target.
    ResampleMove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsimConfig {
    pub m: usize,
    pub p0: f64,
    pub scheme: MoveScheme,
    /// Chain transition for [`MoveScheme::Chains`].
    pub kernel: ChainKernel,
    /// Random-walk scales; defaults to the input standard deviations.
    pub proposal_sds: Option<Vec<f64>>,
    /// Passes per move for [`MoveScheme::ResampleMove`].
    pub sweeps: usize,
    pub max_stages: usize,
    pub trace: bool,
}

fn default_sweeps() -> usize {
    1
}

fn default_max_stages() -> usize {
    50
}

impl Default for SubsimConfig {
    fn default() -> Self {
        SubsimConfig::new(1000, 0.1)
    }
}

impl SubsimConfig {
    pub fn new(m: usize, p0: f64) -> Self {
        SubsimConfig {
            m,
            p0,
            scheme: MoveScheme::default(),
            kernel: ChainKernel::default(),
            proposal_sds: None,
            sweeps: default_sweeps(),
            max_stages: default_max_stages(),
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 10 {
            return Err(Error::invalid("subset simulation needs m >= 10"));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::invalid("p0 must lie in (0, 1)"));
        }
        if self.max_stages == 0 {
            return Err(Error::invalid("max_stages must be positive"));
        }
        Ok(())
    }

    pub(crate) fn move_config(&self, problem: &ReliabilityProblem) -> Result<MoveConfig> {
        let sds = self.proposal_sds.clone().unwrap_or_else(|| problem.input.sds().to_vec());
        if sds.len() != problem.dims() {
            return Err(Error::invalid("proposal_sds must have one entry per input"));
        }
        MoveConfig::new(sds, self.sweeps)
    }
}

/// Subset simulation with adaptive levels.
///
/// Stage 1 is crude Monte Carlo on `m` draws. Each level is the empirical
/// `(1 - p0)`-quantile of the current performance values. The particles above
/// it then produce the next `m` particles, restricted to the intermediate
/// failure domain, according to [`MoveScheme`].
pub fn classic_subsim<R: Rng + ?Sized>(
    problem: &ReliabilityProblem,
    config: &SubsimConfig,
    rng: &mut R,
) -> Result<EstimateReport> {
    config.validate()?;
    let move_config = config.move_config(problem)?;
    let ev = CountingEvaluator::new(problem);
    let u_final = problem.failure_threshold;
    let m = config.m;
    let ones = vec![1.0; m];

    let mut particles = problem.input.sample(m, rng);
    let mut values = particles.rows().map(|x| ev.eval(x)).collect::<Result<Vec<f64>>>()?;
    let mut stage_cost = ev.calls();
    let mut report = EstimateReport::new(Method::Subsim);
    let mut estimate = 1.0;

    for stage in 1..=config.max_stages {
        let preds: Vec<Prediction> = values.iter().map(|&v| Prediction { mean: v, variance: 0.0 }).collect();
        let level = solve_threshold_from_predictions(&preds, &ones, u_final, config.p0)?;
        let inside: Vec<f64> = values.iter().map(|&v| if v > level { 1.0 } else { 0.0 }).collect();
        let (weights, factor) = compute_weights(&inside, &ones).map_err(|e| stage_error(stage, &ev, e))?;
        estimate *= factor;
        report.stages.push(StageRecord {
            stage,
            threshold: level,
            factor,
            evaluations: stage_cost,
            mean_tau: 0.0,
        });
        if level == u_final {
            report.estimate = estimate;
            report.total_evaluations = ev.calls();
            let t = report.stages.len() as u64;
            let survivors = (config.p0 * m as f64).round() as u64;
            report.paper_accounting_evaluations = Some(m as u64 + (t - 1) * (m as u64 - survivors));
            return Ok(report);
        }

        let pop = ParticlePopulation::weighted(particles, weights, stage - 1)?;
        if config.trace {
            report.snapshots.push(PopulationSnapshot {
                stage,
                points: pop.points().clone(),
                weights: pop.weights().to_vec(),
            });
        }
        let before = ev.calls();
        let inside_level = |x: &[f64]| {
            let v = ev.eval(x)?;
            Ok((v > level).then_some(v))
        };
        let (next, next_values) = match config.scheme {
            MoveScheme::Chains => {
                let seeds: Vec<usize> = (0..m).filter(|&i| values[i] > level).collect();
                let lengths = chain_lengths(m, seeds.len()).map_err(|e| stage_error(stage + 1, &ev, e))?;
                let seed_values: Vec<f64> = seeds.iter().map(|&i| values[i]).collect();
                let (states, states_values, _) = metropolis_chains(
                    &pop.points().select(&seeds),
                    &seed_values,
                    &lengths,
                    config.kernel,
                    |j, v| problem.input.marginal_logpdf(j, v),
                    inside_level,
                    &move_config.proposal_sds,
                    rng,
                )
                .map_err(|e| stage_error(stage + 1, &ev, e))?;
                (states, states_values)
            }
            MoveScheme::ResampleMove => {
                let idx = multinomial_indices(pop.weights(), m, rng)?;
                let resampled = ParticlePopulation::uniform(pop.points().select(&idx), stage)?;
                let seeds: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                let (moved, moved_values, _) = constrained_mwg_move(
                    &resampled,
                    &seeds,
                    |x| problem.input.logpdf_unchecked(x),
                    inside_level,
                    &move_config,
                    rng,
                )
                .map_err(|e| stage_error(stage + 1, &ev, e))?;
                (moved.into_points(), moved_values)
            }
        };
        particles = next;
        values = next_values;
        stage_cost = ev.calls() - before;
    }

    report.estimate = estimate;
    report.total_evaluations = ev.calls();
    Err(Error::NonConvergence {
        stages: config.max_stages,
        partial: Box::new(report),
    })
}

fn stage_error(stage: usize, ev: &CountingEvaluator<'_>, e: Error) -> Error {
    Error::Stage {
        stage,
        evaluations: ev.calls(),
        source: Box::new(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{InputDistribution, Performance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(u: f64) -> ReliabilityProblem {
        let input = InputDistribution::standard(2).unwrap();
        ReliabilityProblem::new("linear", input, Performance::custom(|x| (x[0] + x[1]) / 2f64.sqrt()), u).unwrap()
    }

    #[test]
    fn threshold_below_quantile_is_single_stage_mc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = classic_subsim(&linear(-1.0), &SubsimConfig::new(500, 0.1), &mut rng).unwrap();
        assert_eq!(r.num_stages(), 1);
        assert_eq!(r.total_evaluations, 500);
        assert_eq!(r.paper_accounting_evaluations, Some(500));
        assert!((r.estimate - 0.841).abs() < 0.05);
    }

    #[test]
    fn intermediate_factors_equal_p0() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = classic_subsim(&linear(3.7), &SubsimConfig::new(1000, 0.1), &mut rng).unwrap();
        let t = r.num_stages();
        assert!(t >= 3, "{t} stages");
        for s in &r.stages[..t - 1] {
            assert!(s.factor >= 0.1 && s.factor < 0.15, "{}", s.factor);
        }
        let last = r.stages[t - 1].factor;
        assert!(last > 0.0 && last <= 1.0);
        assert!((r.product_of_factors() - r.estimate).abs() <= 1e-15 * r.estimate);
        for w in r.stages.windows(2) {
            assert!(w[1].threshold > w[0].threshold);
        }
        assert_eq!(r.stages[t - 1].threshold, 3.7);
        assert_eq!(r.paper_accounting_evaluations, Some(1000 + (t as u64 - 1) * 900));
        assert_eq!(r.stages[0].evaluations, 1000);
        let counted: u64 = r.stages.iter().map(|s| s.evaluations).sum();
        assert_eq!(counted, r.total_evaluations);
        // P(Z > 3.7) ≈ 1.08e-4; a single run is within a factor of three.
        assert!(r.estimate > 3e-5 && r.estimate < 4e-4, "{}", r.estimate);
    }

    #[test]
    fn stage_limit_reports_partial_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = SubsimConfig::new(200, 0.1);
        cfg.max_stages = 2;
        match classic_subsim(&linear(6.0), &cfg, &mut rng) {
            Err(Error::NonConvergence { stages, partial }) => {
                assert_eq!(stages, 2);
                assert_eq!(partial.num_stages(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(classic_subsim(&linear(1.0), &SubsimConfig::new(5, 0.1), &mut rng).is_err());
        assert!(classic_subsim(&linear(1.0), &SubsimConfig::new(100, 1.0), &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            classic_subsim(&linear(3.0), &SubsimConfig::new(300, 0.1), &mut rng).unwrap()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.thresholds(), b.thresholds());
    }
}
