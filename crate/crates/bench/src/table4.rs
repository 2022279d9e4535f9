//! Side-by-side comparison of crude Monte Carlo, subset simulation and
//! Bayesian subset simulation on the cantilever problem.

use std::fs;
use std::path::Path;

use raresim_core::estimators::Method;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};
use crate::experiment::{run_experiment, write_artifacts, Summary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub m: u64,
    pub n_mean: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub estimate: f64,
    pub sd: Option<f64>,
    pub kappa: Option<f64>,
    pub cov: Option<f64>,
}

impl ComparisonRow {
    fn new(summary: &Summary, m: u64) -> Self {
        ComparisonRow {
            method: summary.method,
            m,
            n_mean: summary.evaluations.mean,
            n_min: summary.evaluations.min,
            n_max: summary.evaluations.max,
            estimate: summary.mean,
            // A single Monte Carlo run reports its binomial standard error.
            sd: summary.sd.or(summary.binomial_se),
            kappa: summary.stats.as_ref().map(|s| s.kappa),
            cov: summary
                .stats
                .as_ref()
                .and_then(|s| s.cov.or(summary.binomial_se.map(|b| b / s.reference))),
        }
    }
}

/// Runs the three experiments with the paper-cantilever settings, writing each
/// into its own subdirectory of `out` and the comparison to `table4.csv` and
/// `table4.json`.
pub fn run_table4(out: &Path, seed: u64, jobs: usize, trace: bool) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for method in [Method::Mc, Method::Subsim, Method::Bss] {
        let mut config = ExperimentConfig::paper_cantilever(method);
        config.seed = seed;
        log::info!("table4: {method} with {} replications", config.replications);
        let outcome = run_experiment(&config, jobs, trace)?;
        write_artifacts(&outcome, &out.join(method.as_str()))?;
        let m = match method {
            Method::Mc => config.mc.m,
            Method::Subsim => config.subsim.m as u64,
            Method::Bss => config.bss.m as u64,
        };
        rows.push(ComparisonRow::new(&outcome.summary, m));
    }
    let mut w = csv::Writer::from_path(out.join("table4.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(out.join("table4.csv")))?;
    let path = out.join("table4.json");
    fs::write(&path, serde_json::to_string_pretty(&rows)? + "\n").map_err(io_err(&path))?;
    Ok(rows)
}
