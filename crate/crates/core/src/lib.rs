//! Deterministic maximum-likelihood direction-of-arrival estimation for a
//! half-wavelength uniform linear array in Gaussian mixture noise.
//!
//! Two EM-type solvers share the same E-/M-step primitives:
//!
//! * [`sage`] updates all DOAs simultaneously from one complete-data space
//!   that splits the noise evenly across sources;
//! * [`aecm`] updates one source at a time against the data with every other
//!   source subtracted.
//!
//! Each DOA update maximizes a one-dimensional objective in `u = cos(theta)`
//! through a [`doa_search::DoaSearchStrategy`]: a local golden-section climb
//! from the previous estimate, or a global grid maximum.

pub mod aecm;
pub mod array_model;
pub mod doa_search;
pub mod em_common;
pub mod error;
pub mod harness;
pub mod iteration;
pub mod sage;
pub mod trace;

pub use array_model::{
    log_likelihood, manifold_matrix, sample_gmm_noise, signal_power, steering_vector,
    synthesize_snapshots, ArrayGeometry, CMatrix, CVector, NoiseModel, ParameterEstimate,
    SnapshotMatrix, SourceConfig,
};
pub use doa_search::{golden_local_search, grid_argmax, DoaSearchStrategy, SearchKind};
pub use em_common::{Responsibilities, WeightDiagonal};
pub use error::{Error, Result};
pub use iteration::{EStep, EarlyStop, EmObserver, IterationOptions, NoObserver, TraceGranularity};
pub use trace::{ConvergenceTrace, TraceRow};
