use std::io::Write;
use std::path::Path;

use crate::aecm;
use crate::array_model::{synthesize_snapshots, ArrayGeometry, ParameterEstimate, SnapshotMatrix};
use crate::doa_search::DoaSearchStrategy;
use crate::error::Result;
use crate::harness::config::{Algorithm, ExperimentConfig};
use crate::iteration::{EmObserver, IterationOptions, NoObserver};
use crate::sage;
use crate::trace::{format_sig12, ConvergenceTrace};

/// A run has converged once every matched DOA error is below this many degrees.
pub const CONVERGENCE_THRESHOLD_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub trace: ConvergenceTrace,
    pub estimate: ParameterEstimate,
}

/// Synthesizes the snapshot matrix described by `config` (noise seeded by `config.seed`).
pub fn synthesize(config: &ExperimentConfig) -> Result<SnapshotMatrix> {
    let geometry = ArrayGeometry::new(config.sensors)?;
    synthesize_snapshots(&geometry, &config.sources()?, &config.noise, config.seed)
}

pub fn iteration_options(config: &ExperimentConfig) -> IterationOptions {
    let mut opts = IterationOptions::new(DoaSearchStrategy::with_kind(config.search), config.iterations)
        .with_truth_deg(config.true_doas_deg.clone());
    opts.granularity = config.granularity;
    opts
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_observed(config, &mut NoObserver)
}

pub fn run_experiment_observed(
    config: &ExperimentConfig,
    observer: &mut dyn EmObserver,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let snapshots = synthesize(config)?;
    let initial = config.initial_estimate()?;
    let opts = iteration_options(config);
    let (estimate, trace) = match config.algorithm {
        Algorithm::Sage => sage::iterate_observed(&snapshots, initial, &opts, observer)?,
        Algorithm::Aecm => aecm::iterate_observed(&snapshots, initial, &opts, observer)?,
    };
    Ok(ExperimentOutcome { trace, estimate })
}

pub fn emit_trace(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    trace.emit(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub iterations: usize,
    pub iterations_to_threshold: Option<usize>,
    pub total_ms: f64,
    pub mean_iteration_ms: f64,
    pub final_max_error_deg: f64,
    pub final_doas_deg: Vec<f64>,
}

impl RunStats {
    pub fn from_trace(trace: &ConvergenceTrace) -> Self {
        let iterations = trace.iterations();
        let last = trace.iteration_rows().last();
        let total_ms = last.map_or(0.0, |r| r.wall_ms);
        Self {
            iterations,
            iterations_to_threshold: trace.iterations_to_threshold(CONVERGENCE_THRESHOLD_DEG),
            total_ms,
            mean_iteration_ms: if iterations > 0 {
                total_ms / iterations as f64
            } else {
                0.0
            },
            final_max_error_deg: last.map_or(f64::NAN, |r| r.max_error_deg()),
            final_doas_deg: last.map(|r| r.doas_deg.clone()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedComparison {
    pub seed: u64,
    pub sage: RunStats,
    pub aecm: RunStats,
}

impl SeedComparison {
    /// AECM reached the threshold no later than SAGE (never-reached counts as infinitely late).
    pub fn aecm_not_slower(&self) -> bool {
        match (self.aecm.iterations_to_threshold, self.sage.iterations_to_threshold) {
            (Some(a), Some(s)) => a <= s,
            (Some(_), None) | (None, None) => true,
            (None, Some(_)) => false,
        }
    }

    pub fn aecm_faster(&self) -> bool {
        match (self.aecm.iterations_to_threshold, self.sage.iterations_to_threshold) {
            (Some(a), Some(s)) => a < s,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonSummary {
    pub rows: Vec<SeedComparison>,
}

impl ComparisonSummary {
    pub fn fraction(&self, pred: impl Fn(&SeedComparison) -> bool) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| pred(r)).count() as f64 / self.rows.len() as f64
    }

    pub fn mean_iteration_ms(&self) -> (f64, f64) {
        let n = self.rows.len().max(1) as f64;
        (
            self.rows.iter().map(|r| r.sage.mean_iteration_ms).sum::<f64>() / n,
            self.rows.iter().map(|r| r.aecm.mean_iteration_ms).sum::<f64>() / n,
        )
    }

    pub const HEADER: &'static str = "seed,sage_iters_to_threshold,aecm_iters_to_threshold,\
sage_total_ms,aecm_total_ms,sage_mean_iter_ms,aecm_mean_iter_ms,\
sage_final_max_err_deg,aecm_final_max_err_deg";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.seed,
                opt(r.sage.iterations_to_threshold),
                opt(r.aecm.iterations_to_threshold),
                format_sig12(r.sage.total_ms),
                format_sig12(r.aecm.total_ms),
                format_sig12(r.sage.mean_iteration_ms),
                format_sig12(r.aecm.mean_iteration_ms),
                format_sig12(r.sage.final_max_error_deg),
                format_sig12(r.aecm.final_max_error_deg),
            )?;
        }
        Ok(())
    }

    pub fn emit(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Runs SAGE and AECM on seeds `config.seed .. config.seed + seeds`, with the
/// same data and initial estimate for both algorithms on each seed.
pub fn compare_runs(config: &ExperimentConfig, seeds: usize) -> Result<ComparisonSummary> {
    compare_runs_observed(config, seeds, &mut NoObserver)
}

pub fn compare_runs_observed(
    config: &ExperimentConfig,
    seeds: usize,
    observer: &mut dyn EmObserver,
) -> Result<ComparisonSummary> {
    let mut rows = Vec::with_capacity(seeds);
    for k in 0..seeds as u64 {
        let seed = config.seed + k;
        let run = |algorithm, observer: &mut dyn EmObserver| {
            let cfg = ExperimentConfig {
                algorithm,
                seed,
                ..config.clone()
            };
            run_experiment_observed(&cfg, observer).map(|o| RunStats::from_trace(&o.trace))
        };
        let sage = run(Algorithm::Sage, observer)?;
        let aecm = run(Algorithm::Aecm, observer)?;
        rows.push(SeedComparison { seed, sage, aecm });
    }
    Ok(ComparisonSummary { rows })
}
