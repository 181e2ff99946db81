//! Outer-loop plumbing shared by the SAGE and AECM drivers: options, the
//! E-step observer hook, trace recording and the optional early stop.

use web_time::Instant;

use crate::array_model::{log_likelihood, ParameterEstimate, SnapshotMatrix};
use crate::doa_search::DoaSearchStrategy;
use crate::em_common::Responsibilities;
use crate::error::{Error, Result};
use crate::trace::{ConvergenceTrace, TraceRow};

/// Which E-step produced a set of responsibilities. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EStep {
    /// SAGE EM-pair 1, 2 or 3.
    SagePair(usize),
    /// AECM EM-cycle `1..=M+2`.
    AecmCycle(usize),
}

impl EStep {
    pub fn index(&self) -> usize {
        match *self {
            EStep::SagePair(k) | EStep::AecmCycle(k) => k,
        }
    }
}

impl std::fmt::Display for EStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EStep::SagePair(k) => write!(f, "EM-pair {k}"),
            EStep::AecmCycle(k) => write!(f, "EM-cycle {k}"),
        }
    }
}

/// Hooks called from inside an iteration. Iterations are 1-based.
pub trait EmObserver {
    fn on_responsibilities(&mut self, _iteration: usize, _step: EStep, _resp: &Responsibilities) {}

    /// Called after each EM-pair / EM-cycle with the partially updated estimate.
    fn on_step_end(&mut self, _iteration: usize, _step: EStep, _estimate: &ParameterEstimate) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl EmObserver for NoObserver {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceGranularity {
    /// One row per full iteration.
    #[default]
    Iteration,
    /// Additionally one row after every EM-pair / EM-cycle.
    Cycle,
}

/// Stop once the largest DOA change stays below `tolerance` (radians) for
/// `patience` consecutive iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOptions {
    pub search: DoaSearchStrategy,
    pub max_iterations: usize,
    pub early_stop: Option<EarlyStop>,
    pub granularity: TraceGranularity,
    /// True DOAs in degrees, for per-row error reporting.
    pub truth_deg: Option<Vec<f64>>,
}

impl IterationOptions {
    pub fn new(search: DoaSearchStrategy, max_iterations: usize) -> Self {
        Self {
            search,
            max_iterations,
            early_stop: None,
            granularity: TraceGranularity::Iteration,
            truth_deg: None,
        }
    }

    pub fn with_truth_deg(mut self, truth: Vec<f64>) -> Self {
        self.truth_deg = Some(truth);
        self
    }
}

/// Forwards to the caller's observer and records per-step rows when asked.
struct Recorder<'a> {
    inner: &'a mut dyn EmObserver,
    snapshots: &'a SnapshotMatrix,
    truth: Option<&'a [f64]>,
    per_step: bool,
    rows: Vec<TraceRow>,
    failure: Option<Error>,
    base_ms: f64,
}

impl EmObserver for Recorder<'_> {
    fn on_responsibilities(&mut self, iteration: usize, step: EStep, resp: &Responsibilities) {
        self.inner.on_responsibilities(iteration, step, resp);
    }

    fn on_step_end(&mut self, iteration: usize, step: EStep, estimate: &ParameterEstimate) {
        self.inner.on_step_end(iteration, step, estimate);
        if self.per_step && self.failure.is_none() {
            match log_likelihood(self.snapshots, estimate) {
                Ok(ll) => self.rows.push(TraceRow::from_estimate(
                    iteration,
                    Some(step.index()),
                    estimate,
                    self.truth,
                    ll,
                    self.base_ms,
                )),
                Err(e) => self.failure = Some(e),
            }
        }
    }
}

/// One full iteration of an algorithm, updating the estimate in place.
pub(crate) type StepFn<'s> = dyn FnMut(
        &SnapshotMatrix,
        &mut ParameterEstimate,
        usize,
        &DoaSearchStrategy,
        &mut dyn EmObserver,
    ) -> Result<()>
    + 's;

pub(crate) fn run_iterations(
    snapshots: &SnapshotMatrix,
    initial: ParameterEstimate,
    opts: &IterationOptions,
    observer: &mut dyn EmObserver,
    step: &mut StepFn<'_>,
) -> Result<(ParameterEstimate, ConvergenceTrace)> {
    if opts.max_iterations == 0 {
        return Err(Error::invalid("max_iterations", "need at least one iteration"));
    }
    opts.search.validate()?;
    initial.validate()?;
    if snapshots.num_sensors() <= initial.num_sources() {
        return Err(Error::Structure(format!(
            "{} sensors cannot resolve {} sources",
            snapshots.num_sensors(),
            initial.num_sources()
        )));
    }
    if initial.num_snapshots() != snapshots.num_snapshots() {
        return Err(Error::Structure(format!(
            "initial waveforms cover {} snapshots, data has {}",
            initial.num_snapshots(),
            snapshots.num_snapshots()
        )));
    }

    let truth = opts.truth_deg.as_deref();
    let mut trace = ConvergenceTrace::new();
    let ll0 = log_likelihood(snapshots, &initial)?;
    trace
        .rows
        .push(TraceRow::from_estimate(0, None, &initial, truth, ll0, 0.0));

    let mut estimate = initial;
    let mut elapsed_ms = 0.0;
    let mut quiet = 0;
    for k in 1..=opts.max_iterations {
        let before = estimate.doas.clone();
        let mut recorder = Recorder {
            inner: observer,
            snapshots,
            truth,
            per_step: opts.granularity == TraceGranularity::Cycle,
            rows: Vec::new(),
            failure: None,
            base_ms: elapsed_ms,
        };
        let started = Instant::now();
        step(snapshots, &mut estimate, k, &opts.search, &mut recorder)?;
        elapsed_ms += started.elapsed().as_secs_f64() * 1e3;
        if let Some(e) = recorder.failure.take() {
            return Err(e);
        }
        trace.rows.append(&mut recorder.rows);

        let ll = log_likelihood(snapshots, &estimate).map_err(|e| Error::Iteration {
            iteration: k,
            stage: "log-likelihood".into(),
            inner: Box::new(e),
        })?;
        trace
            .rows
            .push(TraceRow::from_estimate(k, None, &estimate, truth, ll, elapsed_ms));

        if let Some(rule) = opts.early_stop {
            let change = before
                .iter()
                .zip(&estimate.doas)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            quiet = if change < rule.tolerance { quiet + 1 } else { 0 };
            if quiet >= rule.patience {
                break;
            }
        }
    }
    Ok((estimate, trace))
}

pub(crate) fn at_stage(iteration: usize, step: EStep) -> impl FnOnce(Error) -> Error {
    move |e| Error::Iteration {
        iteration,
        stage: step.to_string(),
        inner: Box::new(e),
    }
}
