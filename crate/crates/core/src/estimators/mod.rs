//! Crude Monte Carlo, subset simulation and Bayesian subset simulation.

mod bss;
mod doe;
mod mc;
mod subsim;
mod threshold;

use serde::{Deserialize, Serialize};

pub use bss::{bayesian_subsim, bayesian_subsim_with, compute_bayes_alpha, BssConfig};
pub use doe::{maximin_design_indices, maximin_doe};
pub use mc::crude_mc;
pub use subsim::{classic_subsim, MoveScheme, SubsimConfig};
pub use crate::smc::ChainKernel;
pub use threshold::{solve_threshold, solve_threshold_from_predictions};

use crate::excursion::LearningTrace;
use crate::points::Points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Subsim,
    Bss,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Subsim => "subsim",
            Method::Bss => "bss",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One factor of the product estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// 1-based stage index.
    pub stage: usize,
    pub threshold: f64,
    pub factor: f64,
    /// Performance-function evaluations spent in this stage.
    pub evaluations: u64,
    /// Mean misclassification over the particles at the recorded threshold
    /// (zero for the exact-indicator estimators).
    pub mean_tau: f64,
}

/// Points and weights of a population just before resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub stage: usize,
    pub points: Points,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub estimate: f64,
    pub stages: Vec<StageRecord>,
    /// Every call to the performance function, initial design included.
    pub total_evaluations: u64,
    /// Size of the initial design (Bayesian subset simulation only).
    pub initial_design: u64,
    /// Subset simulation cost counted as `m + (T - 1)(1 - p0)m`, i.e. one
    /// evaluation per new chain state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_accounting_evaluations: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learning: Vec<LearningTrace>,
    #[serde(skip)]
    pub snapshots: Vec<PopulationSnapshot>,
}

impl EstimateReport {
    pub(crate) fn new(method: Method) -> Self {
        EstimateReport {
            method,
            seed: None,
            estimate: f64::NAN,
            stages: Vec::new(),
            total_evaluations: 0,
            initial_design: 0,
            paper_accounting_evaluations: None,
            learning: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Product of the recorded stage factors.
    pub fn product_of_factors(&self) -> f64 {
        self.stages.iter().map(|s| s.factor).product()
    }

    /// `initial_design + Σ N_t`.
    pub fn accounted_evaluations(&self) -> u64 {
        self.initial_design + self.stages.iter().map(|s| s.evaluations).sum::<u64>()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.threshold).collect()
    }
}
