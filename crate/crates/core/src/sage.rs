//! SAGE iteration: three EM-pairs per iteration.
//!
//! 1. Split the residual evenly across sources (complete data with one
//!    hidden signal-plus-noise term per source), then update every
//!    `(theta_m, s_m)` simultaneously from the same posterior weights.
//! 2. Refit all waveforms jointly by weighted least squares.
//! 3. Refit the mixture weights and standard deviations.

use num_complex::Complex64;

use crate::array_model::{manifold_matrix, CMatrix, ParameterEstimate, SnapshotMatrix};
use crate::doa_search::DoaSearchStrategy;
use crate::em_common::{
    column, doa_objective, multi_source_signal_update, noise_param_update, responsibilities,
    single_source_signal_update, squared_residuals, weight_diagonals, NoiseUpdate, Responsibilities,
};
use crate::error::{Error, Result};
use crate::iteration::{at_stage, run_iterations, EStep, EmObserver, IterationOptions, NoObserver};
use crate::trace::{ConvergenceTrace, TraceRow};

/// Iteration state of a SAGE run.
#[derive(Debug, Clone, PartialEq)]
pub struct SageState {
    pub estimate: ParameterEstimate,
    pub iteration: usize,
    pub trace_row: Option<TraceRow>,
}

impl SageState {
    pub fn new(estimate: ParameterEstimate) -> Self {
        Self {
            estimate,
            iteration: 0,
            trace_row: None,
        }
    }

    /// Runs one full iteration (EM-pairs 1 to 3).
    pub fn step(
        &mut self,
        snapshots: &SnapshotMatrix,
        search: &DoaSearchStrategy,
        observer: &mut dyn EmObserver,
    ) -> Result<()> {
        self.iteration += 1;
        iteration_step(snapshots, &mut self.estimate, self.iteration, search, observer)
    }
}

/// E-step of EM-pair 1: posterior weights at the current fit and the
/// per-source conditional means `mu^m = a(theta_m) s_m + (Y - A S) / M`.
pub fn estep1(
    snapshots: &SnapshotMatrix,
    estimate: &ParameterEstimate,
) -> Result<(Responsibilities, Vec<CMatrix>)> {
    let n = snapshots.num_sensors();
    let a = manifold_matrix(&estimate.doas, n)?;
    let predicted = &a * &estimate.waveforms;
    let resp = responsibilities(snapshots, &predicted, &estimate.noise)?;
    let m_count = estimate.num_sources();
    let share = (snapshots.data() - &predicted) / Complex64::new(m_count as f64, 0.0);
    let mu = (0..m_count)
        .map(|m| a.column(m) * estimate.waveforms.row(m) + &share)
        .collect();
    Ok((resp, mu))
}

/// M-step of EM-pair 1. Every source reads the same weights and the same
/// previous DOAs, so the per-source subproblems are independent.
pub fn mstep1(
    mu: &[CMatrix],
    resp: &Responsibilities,
    estimate: &ParameterEstimate,
    search: &DoaSearchStrategy,
) -> Result<(Vec<f64>, CMatrix)> {
    let weights = weight_diagonals(resp, &estimate.noise);
    let n_snaps = resp.num_snapshots();
    let mut doas = Vec::with_capacity(mu.len());
    let mut waveforms = CMatrix::zeros(mu.len(), n_snaps);
    for (m, target) in mu.iter().enumerate() {
        let objective = doa_objective(target, &weights)?;
        let u = search
            .maximize(|u| objective.value(u), estimate.doas[m].cos())
            .map_err(|e| Error::Search {
                source_index: m,
                inner: Box::new(e),
            })?;
        let theta = u.acos();
        for (t, w) in weights.iter().enumerate() {
            waveforms[(m, t)] = single_source_signal_update(&column(target, t), theta, w);
        }
        doas.push(theta);
    }
    Ok((doas, waveforms))
}

/// EM-pair 2: posterior weights at the partially updated fit, then a joint
/// weighted least-squares refit of all waveforms with the DOAs fixed.
pub fn empair2(
    snapshots: &SnapshotMatrix,
    estimate: &ParameterEstimate,
) -> Result<(Responsibilities, CMatrix)> {
    let a = manifold_matrix(&estimate.doas, snapshots.num_sensors())?;
    let predicted = &a * &estimate.waveforms;
    let resp = responsibilities(snapshots, &predicted, &estimate.noise)?;
    let weights = weight_diagonals(&resp, &estimate.noise);
    let waveforms = multi_source_signal_update(snapshots, &a, &weights)?;
    Ok((resp, waveforms))
}

/// EM-pair 3: posterior weights at the refitted signals, then the closed-form
/// mixture update from the squared residuals.
pub fn empair3(
    snapshots: &SnapshotMatrix,
    estimate: &ParameterEstimate,
) -> Result<(Responsibilities, NoiseUpdate)> {
    let predicted = estimate.predicted(snapshots.num_sensors())?;
    let resp = responsibilities(snapshots, &predicted, &estimate.noise)?;
    let residuals = squared_residuals(snapshots, &predicted);
    let update = noise_param_update(&resp, &residuals)?;
    Ok((resp, update))
}

fn iteration_step(
    snapshots: &SnapshotMatrix,
    estimate: &mut ParameterEstimate,
    k: usize,
    search: &DoaSearchStrategy,
    observer: &mut dyn EmObserver,
) -> Result<()> {
    let pair = EStep::SagePair(1);
    let (resp, mu) = estep1(snapshots, estimate).map_err(at_stage(k, pair))?;
    observer.on_responsibilities(k, pair, &resp);
    let (doas, waveforms) = mstep1(&mu, &resp, estimate, search).map_err(at_stage(k, pair))?;
    estimate.doas = doas;
    estimate.waveforms = waveforms;
    estimate.validate().map_err(at_stage(k, pair))?;
    observer.on_step_end(k, pair, estimate);

    signal_and_noise_refit(snapshots, estimate, k, EStep::SagePair(2), EStep::SagePair(3), observer)
}

/// EM-pairs 2 and 3, shared with the last two AECM cycles.
pub(crate) fn signal_and_noise_refit(
    snapshots: &SnapshotMatrix,
    estimate: &mut ParameterEstimate,
    k: usize,
    signal_step: EStep,
    noise_step: EStep,
    observer: &mut dyn EmObserver,
) -> Result<()> {
    let (resp, waveforms) = empair2(snapshots, estimate).map_err(at_stage(k, signal_step))?;
    observer.on_responsibilities(k, signal_step, &resp);
    estimate.waveforms = waveforms;
    estimate.validate().map_err(at_stage(k, signal_step))?;
    observer.on_step_end(k, signal_step, estimate);

    let (resp, update) = empair3(snapshots, estimate).map_err(at_stage(k, noise_step))?;
    observer.on_responsibilities(k, noise_step, &resp);
    estimate.noise = update.noise;
    observer.on_step_end(k, noise_step, estimate);
    Ok(())
}

/// Runs up to `opts.max_iterations` SAGE iterations from `initial`.
/// The trace has one row per iteration plus the initial row.
pub fn iterate(
    snapshots: &SnapshotMatrix,
    initial: ParameterEstimate,
    opts: &IterationOptions,
) -> Result<(ParameterEstimate, ConvergenceTrace)> {
    iterate_observed(snapshots, initial, opts, &mut NoObserver)
}

pub fn iterate_observed(
    snapshots: &SnapshotMatrix,
    initial: ParameterEstimate,
    opts: &IterationOptions,
    observer: &mut dyn EmObserver,
) -> Result<(ParameterEstimate, ConvergenceTrace)> {
    run_iterations(snapshots, initial, opts, observer, &mut iteration_step)
}
