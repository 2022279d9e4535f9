//! Replication loop, aggregation and on-disk artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use raresim_core::estimators::{
    bayesian_subsim, classic_subsim, crude_mc, EstimateReport, Method, PopulationSnapshot,
};
use raresim_core::excursion::LearningTrace;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_err, BenchError, Result};
use crate::seeds::replication_seed;
use crate::stats::{binomial_se, compute_stats, sample_moments, ReplicationStats};

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub replication: usize,
    pub seed: u64,
    pub outcome: std::result::Result<EstimateReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replication: usize,
    pub seed: u64,
    pub estimate: f64,
    pub stages: usize,
    pub evaluations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper_evaluations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub problem: String,
    pub threshold: f64,
    pub master_seed: u64,
    pub replications: usize,
    pub completed: usize,
    pub failed: usize,
    pub mean: f64,
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<ReplicationStats>,
    /// Binomial standard error of a single crude Monte Carlo run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binomial_se: Option<f64>,
    pub evaluations: EvaluationSummary,
    /// Number of runs per stage count.
    pub stage_counts: BTreeMap<usize, usize>,
    /// Evaluations at stage `t`, averaged over the runs that reached it.
    pub mean_stage_evaluations: Vec<f64>,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
}

/// One replication with its derived seed.
pub fn run_replication(config: &ExperimentConfig, replication: usize, trace: bool) -> RunRecord {
    let seed = replication_seed(config.seed, replication as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = match config.method {
        Method::Mc => crude_mc(&config.problem, config.mc.m, &mut rng),
        Method::Subsim => {
            let mut c = config.subsim.clone();
            c.trace |= trace;
            classic_subsim(&config.problem, &c, &mut rng)
        }
        Method::Bss => {
            let mut c = config.bss.clone();
            c.trace |= trace;
            bayesian_subsim(&config.problem, &c, &mut rng)
        }
    };
    let outcome = outcome
        .map(|mut r| {
            r.seed = Some(seed);
            r
        })
        .map_err(|e| e.to_string());
    match &outcome {
        Ok(r) => {
            log::info!(
                "replication {replication}: estimate {:e}, {} stages, {} evaluations",
                r.estimate,
                r.num_stages(),
                r.total_evaluations
            );
            for s in &r.stages {
                log::trace!(
                    "replication {replication} stage {}: u = {}, factor = {}, N = {}, mean tau = {:e}",
                    s.stage,
                    s.threshold,
                    s.factor,
                    s.evaluations,
                    s.mean_tau
                );
            }
        }
        Err(e) => log::info!("replication {replication} failed: {e}"),
    }
    RunRecord {
        replication,
        seed,
        outcome,
    }
}

/// Runs every replication on a pool of `jobs` workers and aggregates the
/// results. Failed replications are excluded from the statistics; more than
/// 20% failures is an error.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize, trace: bool) -> Result<ExperimentOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let runs: Vec<RunRecord> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|k| run_replication(config, k, trace))
            .collect()
    });
    let summary = summarize(config, &runs)?;
    Ok(ExperimentOutcome { summary, runs })
}

pub fn summarize(config: &ExperimentConfig, runs: &[RunRecord]) -> Result<Summary> {
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for run in runs {
        match &run.outcome {
            Ok(r) => done.push(RunSummary {
                replication: run.replication,
                seed: run.seed,
                estimate: r.estimate,
                stages: r.num_stages(),
                evaluations: r.total_evaluations,
                paper_evaluations: r.paper_accounting_evaluations,
            }),
            Err(e) => failures.push(Failure {
                replication: run.replication,
                seed: run.seed,
                error: e.clone(),
            }),
        }
    }
    if failures.len() * 5 > runs.len() || done.is_empty() {
        return Err(BenchError::TooManyFailures {
            failed: failures.len(),
            total: runs.len(),
        });
    }
    let estimates: Vec<f64> = done.iter().map(|r| r.estimate).collect();
    let (mean, sd) = sample_moments(&estimates).expect("at least one completed run");
    let stats = config.reference.map(|a| compute_stats(&estimates, a)).transpose()?;
    let evals: Vec<u64> = done.iter().map(|r| r.evaluations).collect();
    let mut stage_counts = BTreeMap::new();
    for r in &done {
        *stage_counts.entry(r.stages).or_insert(0) += 1;
    }
    let max_stages = done.iter().map(|r| r.stages).max().unwrap_or(0);
    let mut totals = vec![(0u64, 0usize); max_stages];
    for run in runs {
        if let Ok(r) = &run.outcome {
            for s in &r.stages {
                totals[s.stage - 1].0 += s.evaluations;
                totals[s.stage - 1].1 += 1;
            }
        }
    }
    Ok(Summary {
        method: config.method,
        problem: config.problem.name.clone(),
        threshold: config.problem.failure_threshold,
        master_seed: config.seed,
        replications: runs.len(),
        completed: done.len(),
        failed: failures.len(),
        mean,
        sd,
        stats,
        binomial_se: (config.method == Method::Mc && done.len() == 1).then(|| binomial_se(mean, config.mc.m)),
        evaluations: EvaluationSummary {
            mean: evals.iter().sum::<u64>() as f64 / evals.len() as f64,
            min: *evals.iter().min().expect("nonempty"),
            max: *evals.iter().max().expect("nonempty"),
        },
        stage_counts,
        mean_stage_evaluations: totals.iter().map(|&(n, c)| n as f64 / c as f64).collect(),
        runs: done,
        failures,
    })
}

#[derive(Serialize)]
struct RunRow<'a> {
    replication: usize,
    seed: u64,
    status: &'a str,
    estimate: Option<f64>,
    stages: Option<usize>,
    evaluations: Option<u64>,
    paper_evaluations: Option<u64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct StageRow {
    replication: usize,
    t: usize,
    u_t: f64,
    factor: f64,
    #[serde(rename = "N_t")]
    n_t: u64,
    mean_tau: f64,
}

#[derive(Serialize)]
struct TraceDump<'a> {
    replication: usize,
    seed: u64,
    learning: &'a [LearningTrace],
    populations: &'a [PopulationSnapshot],
}

pub fn summary_json(summary: &Summary) -> Result<String> {
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    Ok(s)
}

/// Writes `summary.json`, `runs.csv` and `stages.csv` into `dir`, plus one
/// trace file per replication under `dir/trace` when the reports carry traces.
pub fn write_artifacts(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("summary.json");
    fs::write(&path, summary_json(&outcome.summary)?).map_err(io_err(&path))?;

    let mut runs = csv::Writer::from_path(dir.join("runs.csv"))?;
    let mut stages = csv::Writer::from_path(dir.join("stages.csv"))?;
    for run in &outcome.runs {
        match &run.outcome {
            Ok(r) => {
                runs.serialize(RunRow {
                    replication: run.replication,
                    seed: run.seed,
                    status: "ok",
                    estimate: Some(r.estimate),
                    stages: Some(r.num_stages()),
                    evaluations: Some(r.total_evaluations),
                    paper_evaluations: r.paper_accounting_evaluations,
                    error: None,
                })?;
                for s in &r.stages {
                    stages.serialize(StageRow {
                        replication: run.replication,
                        t: s.stage,
                        u_t: s.threshold,
                        factor: s.factor,
                        n_t: s.evaluations,
                        mean_tau: s.mean_tau,
                    })?;
                }
            }
            Err(e) => runs.serialize(RunRow {
                replication: run.replication,
                seed: run.seed,
                status: "failed",
                estimate: None,
                stages: None,
                evaluations: None,
                paper_evaluations: None,
                error: Some(e),
            })?,
        }
    }
    runs.flush().map_err(io_err(dir.join("runs.csv")))?;
    stages.flush().map_err(io_err(dir.join("stages.csv")))?;

    let traced: Vec<_> = outcome
        .runs
        .iter()
        .filter_map(|run| run.outcome.as_ref().ok().map(|r| (run, r)))
        .filter(|(_, r)| !r.learning.is_empty() || !r.snapshots.is_empty())
        .collect();
    if !traced.is_empty() {
        let trace_dir = dir.join("trace");
        fs::create_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;
        for (run, r) in traced {
            let dump = TraceDump {
                replication: run.replication,
                seed: run.seed,
                learning: &r.learning,
                populations: &r.snapshots,
            };
            let path = trace_dir.join(format!("replication-{:04}.json", run.replication));
            fs::write(&path, serde_json::to_string(&dump)?).map_err(io_err(&path))?;
        }
    }
    Ok(())
}
