//! Replication harness for the rare-event estimators in `raresim-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod seeds;
pub mod stats;
pub mod table4;

pub use config::{ExperimentConfig, McConfig};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, write_artifacts, ExperimentOutcome, Summary};
pub use stats::{compute_stats, ReplicationStats};
