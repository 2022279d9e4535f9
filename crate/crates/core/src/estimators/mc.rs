use rand::Rng;

use super::{EstimateReport, Method, StageRecord};
use crate::error::{Error, Result};
use crate::problem::{CountingEvaluator, ReliabilityProblem};

/// Fraction of `m` i.i.d. input draws with `f(x) > u`.
pub fn crude_mc<R: Rng + ?Sized>(problem: &ReliabilityProblem, m: u64, rng: &mut R) -> Result<EstimateReport> {
    if m == 0 {
        return Err(Error::invalid("crude Monte Carlo needs m >= 1"));
    }
    let ev = CountingEvaluator::new(problem);
    let u = problem.failure_threshold;
    let mut failures = 0u64;
    for _ in 0..m {
        let x = problem.input.sample(1, rng);
        if ev.eval(x.row(0))? > u {
            failures += 1;
        }
    }
    let estimate = failures as f64 / m as f64;
    let mut report = EstimateReport::new(Method::Mc);
    report.estimate = estimate;
    report.stages.push(StageRecord {
        stage: 1,
        threshold: u,
        factor: estimate,
        evaluations: ev.calls(),
        mean_tau: 0.0,
    });
    report.total_evaluations = ev.calls();
    Ok(report)
}
