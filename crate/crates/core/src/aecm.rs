//! AECM iteration: `M + 2` EM-cycles per iteration.
//!
//! Cycle `m` (1..=M) treats source `m` plus the full noise as hidden data and
//! all other sources as known, so `(theta_m, s_m)` is refit against the data
//! with every other source subtracted, using the values already updated
//! earlier in the same iteration. Cycles `M + 1` and `M + 2` are the SAGE
//! waveform and noise refits.

use num_complex::Complex64;

use crate::array_model::{
    manifold_matrix, steering_from_cosine, CMatrix, NoiseModel, ParameterEstimate, SnapshotMatrix,
};
use crate::doa_search::DoaSearchStrategy;
use crate::em_common::{
    column, doa_objective, responsibilities, single_source_signal_update, weight_diagonals,
    Responsibilities,
};
use crate::error::{Error, Result};
use crate::iteration::{at_stage, run_iterations, EStep, EmObserver, IterationOptions, NoObserver};
use crate::sage::signal_and_noise_refit;
use crate::trace::ConvergenceTrace;

/// Iteration state of an AECM run. `cycle_cursor` is the 1-based cycle that
/// runs next (1 between iterations).
#[derive(Debug, Clone, PartialEq)]
pub struct AecmState {
    pub estimate: ParameterEstimate,
    pub iteration: usize,
    pub cycle_cursor: usize,
}

impl AecmState {
    pub fn new(estimate: ParameterEstimate) -> Self {
        Self {
            estimate,
            iteration: 0,
            cycle_cursor: 1,
        }
    }

    /// Runs one full iteration (all `M + 2` cycles).
    pub fn step(
        &mut self,
        snapshots: &SnapshotMatrix,
        search: &DoaSearchStrategy,
        observer: &mut dyn EmObserver,
    ) -> Result<()> {
        self.iteration += 1;
        let k = self.iteration;
        let m_count = self.estimate.num_sources();
        for m in 0..m_count {
            self.cycle_cursor = m + 1;
            source_cycle(snapshots, &mut self.estimate, m, k, search, observer)?;
        }
        self.cycle_cursor = m_count + 1;
        signal_and_noise_refit(
            snapshots,
            &mut self.estimate,
            k,
            EStep::AecmCycle(m_count + 1),
            EStep::AecmCycle(m_count + 2),
            observer,
        )?;
        self.cycle_cursor = 1;
        Ok(())
    }
}

/// E-step of cycle `m` (0-based source index): posterior weights at the
/// current mixed old/new fit, and the target `eta^m = Y - sum_{d != m} a_d s_d`.
pub fn estep_m(
    snapshots: &SnapshotMatrix,
    estimate: &ParameterEstimate,
    m: usize,
) -> Result<(Responsibilities, CMatrix)> {
    if m >= estimate.num_sources() {
        return Err(Error::Structure(format!(
            "source index {m} for {} sources",
            estimate.num_sources()
        )));
    }
    let a = manifold_matrix(&estimate.doas, snapshots.num_sensors())?;
    let predicted = &a * &estimate.waveforms;
    let resp = responsibilities(snapshots, &predicted, &estimate.noise)?;
    let own = a.column(m) * estimate.waveforms.row(m);
    let eta = snapshots.data() - predicted + own;
    Ok((resp, eta))
}

/// CM-step of cycle `m`: search the concentrated objective from `start_theta`,
/// then fit `s_m(t)` at the new angle. Returns `(theta_m, s_m)`.
pub fn cmstep_m(
    resp: &Responsibilities,
    eta: &CMatrix,
    noise: &NoiseModel,
    search: &DoaSearchStrategy,
    start_theta: f64,
) -> Result<(f64, Vec<Complex64>)> {
    let weights = weight_diagonals(resp, noise);
    let objective = doa_objective(eta, &weights)?;
    let u = search.maximize(|u| objective.value(u), start_theta.cos())?;
    let theta = u.acos();
    let row = weights
        .iter()
        .enumerate()
        .map(|(t, w)| single_source_signal_update(&column(eta, t), theta, w))
        .collect();
    Ok((theta, row))
}

/// The `(theta_m, s_m)`-dependent part of the cycle's expected complete-data
/// log-likelihood:
/// `-sum_{t,n,l} resp(n,t,l) / sigma_l^2 * (rho + |eta_n(t) - a_n(theta) s(t)|^2)`.
///
/// The conditional variance `rho` of the hidden data is zero for this
/// complete-data space; it is a parameter only so that its irrelevance to the
/// maximizer can be checked.
pub fn cycle_objective(
    resp: &Responsibilities,
    eta: &CMatrix,
    noise: &NoiseModel,
    theta: f64,
    waveform: &[Complex64],
    rho: f64,
) -> f64 {
    let a = steering_from_cosine(theta.cos(), eta.nrows());
    let inv_var: Vec<f64> = noise.stddevs().iter().map(|s| 1.0 / (s * s)).collect();
    let mut total = 0.0;
    for t in 0..eta.ncols() {
        for n in 0..eta.nrows() {
            let r = (eta[(n, t)] - a[n] * waveform[t]).norm_sqr();
            let w: f64 = resp.at(n, t).iter().zip(&inv_var).map(|(p, iv)| p * iv).sum();
            total -= w * (rho + r);
        }
    }
    total
}

fn source_cycle(
    snapshots: &SnapshotMatrix,
    estimate: &mut ParameterEstimate,
    m: usize,
    k: usize,
    search: &DoaSearchStrategy,
    observer: &mut dyn EmObserver,
) -> Result<()> {
    let step = EStep::AecmCycle(m + 1);
    let (resp, eta) = estep_m(snapshots, estimate, m).map_err(at_stage(k, step))?;
    observer.on_responsibilities(k, step, &resp);
    let (theta, row) = cmstep_m(&resp, &eta, &estimate.noise, search, estimate.doas[m])
        .map_err(|e| Error::Search {
            source_index: m,
            inner: Box::new(e),
        })
        .map_err(at_stage(k, step))?;
    estimate.doas[m] = theta;
    for (t, v) in row.into_iter().enumerate() {
        estimate.waveforms[(m, t)] = v;
    }
    estimate.validate().map_err(at_stage(k, step))?;
    observer.on_step_end(k, step, estimate);
    Ok(())
}

fn iteration_step(
    snapshots: &SnapshotMatrix,
    estimate: &mut ParameterEstimate,
    k: usize,
    search: &DoaSearchStrategy,
    observer: &mut dyn EmObserver,
) -> Result<()> {
    let mut state = AecmState {
        estimate: estimate.clone(),
        iteration: k - 1,
        cycle_cursor: 1,
    };
    state.step(snapshots, search, observer)?;
    *estimate = state.estimate;
    Ok(())
}

/// Runs up to `opts.max_iterations` AECM iterations from `initial`.
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
