//! Experiment runner: configuration, synthetic data, algorithm dispatch and
//! SAGE/AECM comparisons.

pub mod config;
pub mod experiment;

pub use config::{load_config, parse_config, Algorithm, ExperimentConfig};
pub use experiment::{
    compare_runs, compare_runs_observed, emit_trace, iteration_options, run_experiment,
    run_experiment_observed, synthesize, ComparisonSummary, ExperimentOutcome, RunStats,
    SeedComparison, CONVERGENCE_THRESHOLD_DEG,
};
