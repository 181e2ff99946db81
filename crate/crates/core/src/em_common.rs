//! E-step and M-step building blocks shared by the SAGE and AECM iterations.
//!
//! Component indices `l` are 0-based here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::array_model::{steering_from_cosine, CMatrix, CVector, NoiseModel, SnapshotMatrix};
use crate::error::{Error, Result};

/// Floor applied to updated component standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// Manifolds whose Gram matrix `A^H A` has a condition estimate above this get a ridge.
pub const RIDGE_CONDITION_LIMIT: f64 = 1e12;
/// Relative ridge strength, scaled by `tr(G) / M`.
pub const RIDGE_EPSILON: f64 = 1e-10;

/// Posterior probabilities of the noise component labels, `N x T x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    num_sensors: usize,
    num_snapshots: usize,
    num_components: usize,
    weights: Vec<f64>,
}

impl Responsibilities {
    /// Builds from raw weights laid out as `weights[(t * N + n) * L + l]`.
    pub fn from_raw(
        num_sensors: usize,
        num_snapshots: usize,
        num_components: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != num_sensors * num_snapshots * num_components {
            return Err(Error::Structure(format!(
                "{} responsibilities for a {}x{}x{} array",
                weights.len(),
                num_sensors,
                num_snapshots,
                num_components
            )));
        }
        Ok(Self {
            num_sensors,
            num_snapshots,
            num_components,
            weights,
        })
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn num_snapshots(&self) -> usize {
        self.num_snapshots
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn get(&self, n: usize, t: usize, l: usize) -> f64 {
        self.weights[(t * self.num_sensors + n) * self.num_components + l]
    }

    /// All component weights for sensor `n`, snapshot `t`.
    pub fn at(&self, n: usize, t: usize) -> &[f64] {
        let start = (t * self.num_sensors + n) * self.num_components;
        &self.weights[start..start + self.num_components]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Largest `|sum_l w(n,t,l) - 1|` over all `(n, t)`.
    pub fn max_normalization_error(&self) -> f64 {
        self.weights
            .chunks(self.num_components)
            .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Diagonal of a per-snapshot weight matrix (`H(t)`, `D(t)` or `G(t)`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagonal {
    entries: Vec<f64>,
}

impl WeightDiagonal {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Structure("empty weight diagonal".into()));
        }
        if let Some(i) = entries.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(
                format!("weight[{i}]"),
                format!("must be finite and > 0, got {}", entries[i]),
            ));
        }
        Ok(Self { entries })
    }

    pub fn identity(num_sensors: usize) -> Self {
        Self {
            entries: vec![1.0; num_sensors],
        }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `chi = tr(W)`, which equals `a^H W a` for any unit-modulus steering vector.
    pub fn trace(&self) -> f64 {
        self.entries.iter().sum()
    }
}

/// Posterior label probabilities given the model prediction at each `(n, t)`.
pub fn responsibilities(
    snapshots: &SnapshotMatrix,
    predicted: &CMatrix,
    noise: &NoiseModel,
) -> Result<Responsibilities> {
    let y = snapshots.data();
    if predicted.shape() != y.shape() {
        return Err(Error::Structure(format!(
            "prediction is {:?}, snapshots are {:?}",
            predicted.shape(),
            y.shape()
        )));
    }
    let (n_sensors, n_snaps) = y.shape();
    let terms = noise.log_terms();
    let big_l = terms.len();
    let mut weights = Vec::with_capacity(n_sensors * n_snaps * big_l);
    let mut logs = vec![0.0; big_l];
    for t in 0..n_snaps {
        for n in 0..n_sensors {
            let r = (y[(n, t)] - predicted[(n, t)]).norm_sqr();
            let mut peak = f64::NEG_INFINITY;
            for (slot, &(c, inv)) in logs.iter_mut().zip(&terms) {
                *slot = c - r * inv;
                peak = peak.max(*slot);
            }
            if !peak.is_finite() {
                return Err(Error::NonFinite { n, t });
            }
            let start = weights.len();
            let mut total = 0.0;
            for &v in &logs {
                let e = (v - peak).exp();
                total += e;
                weights.push(e);
            }
            let cell = &mut weights[start..];
            let mut floored = false;
            for w in cell.iter_mut() {
                *w /= total;
                if *w < f64::MIN_POSITIVE {
                    *w = f64::MIN_POSITIVE;
                    floored = true;
                }
            }
            if floored {
                let s: f64 = cell.iter().sum();
                cell.iter_mut().for_each(|w| *w /= s);
            }
        }
    }
    Responsibilities::from_raw(n_sensors, n_snaps, big_l, weights)
}

/// Diagonal entry `n` is `sum_l resp(n, t, l) / sigma_l^2`.
pub fn weight_diagonal(resp: &Responsibilities, noise: &NoiseModel, t: usize) -> WeightDiagonal {
    let inv_var: Vec<f64> = noise.stddevs().iter().map(|s| 1.0 / (s * s)).collect();
    weight_diagonal_with(resp, &inv_var, t)
}

fn weight_diagonal_with(resp: &Responsibilities, inv_var: &[f64], t: usize) -> WeightDiagonal {
    let entries = (0..resp.num_sensors())
        .map(|n| {
            resp.at(n, t)
                .iter()
                .zip(inv_var)
                .map(|(w, iv)| w * iv)
                .sum()
        })
        .collect();
    WeightDiagonal { entries }
}

/// Weight diagonals for every snapshot.
pub fn weight_diagonals(resp: &Responsibilities, noise: &NoiseModel) -> Vec<WeightDiagonal> {
    let inv_var: Vec<f64> = noise.stddevs().iter().map(|s| 1.0 / (s * s)).collect();
    (0..resp.num_snapshots())
        .map(|t| weight_diagonal_with(resp, &inv_var, t))
        .collect()
}

/// Per-snapshot weighted least squares for all source waveforms with the DOAs
/// (and hence `manifold`) held fixed. Returns the `M x T` waveform matrix.
pub fn multi_source_signal_update(
    snapshots: &SnapshotMatrix,
    manifold: &CMatrix,
    weights: &[WeightDiagonal],
) -> Result<CMatrix> {
    let y = snapshots.data();
    let (n_sensors, n_snaps) = y.shape();
    let m = manifold.ncols();
    if manifold.nrows() != n_sensors || weights.len() != n_snaps {
        return Err(Error::Structure(format!(
            "manifold {:?} and {} weight diagonals for {:?} snapshots",
            manifold.shape(),
            weights.len(),
            y.shape()
        )));
    }
    if n_sensors <= m {
        return Err(Error::Structure(format!(
            "{n_sensors} sensors cannot resolve {m} sources"
        )));
    }
    let a_h = manifold.adjoint();
    // Only the array geometry decides whether to regularize. The noise weights
    // can span many decades once a mixture component sits at the sigma floor,
    // which inflates the weighted Gram condition without making the weighted
    // fit ill-posed.
    let degenerate = condition_estimate(&(&a_h * manifold)) > RIDGE_CONDITION_LIMIT;
    let mut out = CMatrix::zeros(m, n_snaps);
    for t in 0..n_snaps {
        let d = weights[t].entries();
        let s = if degenerate {
            ridge_solve(&a_h, manifold, y, d, t)?
        } else {
            weighted_lstsq(manifold, y, d, t)?
        };
        if s.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::DegenerateGeometry { t });
        }
        out.set_column(t, &s);
    }
    Ok(out)
}

/// Least squares on the row-scaled design `D^{1/2} A` through a QR factorization.
fn weighted_lstsq(manifold: &CMatrix, y: &CMatrix, d: &[f64], t: usize) -> Result<CVector> {
    let root: Vec<f64> = d.iter().map(|w| w.sqrt()).collect();
    let design = CMatrix::from_fn(manifold.nrows(), manifold.ncols(), |n, k| {
        manifold[(n, k)] * root[n]
    });
    let target = CVector::from_fn(manifold.nrows(), |n, _| y[(n, t)] * root[n]);
    let qr = design.qr();
    let rhs = qr.q().adjoint() * target;
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::DegenerateGeometry { t })
}

/// Normal equations with the Tikhonov ridge `eps * tr(A^H D A) / M`.
fn ridge_solve(a_h: &CMatrix, manifold: &CMatrix, y: &CMatrix, d: &[f64], t: usize) -> Result<CVector> {
    let m = manifold.ncols();
    let mut a_h_d = a_h.clone();
    for (n, mut col) in a_h_d.column_iter_mut().enumerate() {
        col *= Complex64::new(d[n], 0.0);
    }
    let mut gram = &a_h_d * manifold;
    let rhs = &a_h_d * y.column(t);
    // Exact Hermitian symmetry for the factorization.
    for i in 0..m {
        gram[(i, i)].im = 0.0;
        for j in (i + 1)..m {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)].conj());
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
    }
    let ridge = RIDGE_EPSILON * gram.trace().re / m as f64;
    for i in 0..m {
        gram[(i, i)] += Complex64::new(ridge, 0.0);
    }
    let chol = gram.cholesky().ok_or(Error::DegenerateGeometry { t })?;
    Ok(chol.solve(&rhs))
}

fn condition_estimate(gram: &CMatrix) -> f64 {
    if gram.nrows() == 1 {
        return if gram[(0, 0)].re > 0.0 { 1.0 } else { f64::INFINITY };
    }
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Weighted single-source waveform fit `a(theta)^H W v / tr(W)`.
pub fn single_source_signal_update(
    target: &CVector,
    theta: f64,
    weight: &WeightDiagonal,
) -> Complex64 {
    let u = theta.cos();
    weighted_projection(target.as_slice(), u, weight.entries()) / weight.trace()
}

/// `a(u)^H W v` for unit-modulus steering with `u = cos(theta)`.
fn weighted_projection(target: &[Complex64], u: f64, w: &[f64]) -> Complex64 {
    let a = steering_from_cosine(u, target.len());
    target
        .iter()
        .zip(w)
        .zip(a.iter())
        .map(|((v, wn), an)| an.conj() * v * *wn)
        .sum()
}

/// The concentrated DOA objective `f(u) = sum_t |a(u)^H W(t) v(t)|^2 / chi(t)`.
///
/// Stored as the lag sums `c_k = sum_t sum_n w_{n+k}(t) conj(w_n(t)) / chi(t)`
/// of the weighted targets `w(t) = W(t) v(t)`, so that
/// `f(u) = c_0 + 2 Re sum_{k>0} c_k exp(j k pi u)` costs `O(N)` per evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaObjective {
    lags: Vec<Complex64>,
}

impl DoaObjective {
    pub fn value(&self, u: f64) -> f64 {
        let step = Complex64::from_polar(1.0, std::f64::consts::PI * u);
        let mut phase = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for c in &self.lags[1..] {
            phase *= step;
            acc += (c * phase).re;
        }
        self.lags[0].re + 2.0 * acc
    }

    /// Value at `theta` (radians).
    pub fn value_at_angle(&self, theta: f64) -> f64 {
        self.value(theta.cos())
    }
}

/// Builds the objective from per-snapshot targets (columns of `targets`) and weights.
pub fn doa_objective(targets: &CMatrix, weights: &[WeightDiagonal]) -> Result<DoaObjective> {
    let (n_sensors, n_snaps) = targets.shape();
    if n_snaps == 0 || weights.len() != n_snaps {
        return Err(Error::Structure(format!(
            "{} weight diagonals for {} target snapshots",
            weights.len(),
            n_snaps
        )));
    }
    let mut lags = vec![Complex64::new(0.0, 0.0); n_sensors];
    let mut w = vec![Complex64::new(0.0, 0.0); n_sensors];
    for (t, weight) in weights.iter().enumerate() {
        let d = weight.entries();
        if d.len() != n_sensors {
            return Err(Error::Structure(format!(
                "weight diagonal of length {} for {} sensors",
                d.len(),
                n_sensors
            )));
        }
        for n in 0..n_sensors {
            w[n] = targets[(n, t)] * d[n];
        }
        let inv_chi = 1.0 / weight.trace();
        for (k, lag) in lags.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for n in 0..(n_sensors - k) {
                s += w[n + k] * w[n].conj();
            }
            *lag += s * inv_chi;
        }
    }
    Ok(DoaObjective { lags })
}

/// Result of the closed-form noise-parameter M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseUpdate {
    pub noise: NoiseModel,
    /// Components whose standard deviation hit [`SIGMA_FLOOR`].
    pub floored: Vec<usize>,
}

/// `lambda_l = kappa_l / (TN)`, `sigma_l = sqrt(eps_l / kappa_l)` with
/// `kappa_l = sum resp(.,.,l)` and `eps_l = sum resp(.,.,l) c_n(t)`.
pub fn noise_param_update(resp: &Responsibilities, residuals: &DMatrix<f64>) -> Result<NoiseUpdate> {
    let (n_sensors, n_snaps) = residuals.shape();
    if n_sensors != resp.num_sensors() || n_snaps != resp.num_snapshots() {
        return Err(Error::Structure(format!(
            "residuals {:?} vs responsibilities {}x{}",
            residuals.shape(),
            resp.num_sensors(),
            resp.num_snapshots()
        )));
    }
    let big_l = resp.num_components();
    let mut kappa = vec![0.0; big_l];
    let mut eps = vec![0.0; big_l];
    for t in 0..n_snaps {
        for n in 0..n_sensors {
            let c = residuals[(n, t)];
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::invalid(
                    format!("residuals[({n}, {t})]"),
                    format!("must be finite and >= 0, got {c}"),
                ));
            }
            for (l, w) in resp.at(n, t).iter().enumerate() {
                kappa[l] += w;
                eps[l] += w * c;
            }
        }
    }
    let total = (n_sensors * n_snaps) as f64;
    let mixing: Vec<f64> = kappa.iter().map(|k| k / total).collect();
    let mut floored = Vec::new();
    let stddevs: Vec<f64> = kappa
        .iter()
        .zip(&eps)
        .enumerate()
        .map(|(l, (k, e))| {
            let s = (e / k).sqrt();
            if s.is_finite() && s >= SIGMA_FLOOR {
                s
            } else {
                floored.push(l);
                SIGMA_FLOOR
            }
        })
        .collect();
    if !floored.is_empty() {
        log::warn!("noise standard deviation floored at {SIGMA_FLOOR} for components {floored:?}");
    }
    Ok(NoiseUpdate {
        noise: NoiseModel::new(mixing, stddevs)?,
        floored,
    })
}

/// Squared residual moduli `|y_n(t) - predicted(n, t)|^2`.
pub fn squared_residuals(snapshots: &SnapshotMatrix, predicted: &CMatrix) -> DMatrix<f64> {
    let y = snapshots.data();
    DMatrix::from_fn(y.nrows(), y.ncols(), |n, t| {
        (y[(n, t)] - predicted[(n, t)]).norm_sqr()
    })
}

pub(crate) fn column(m: &CMatrix, t: usize) -> CVector {
    DVector::from_iterator(m.nrows(), m.column(t).iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{manifold_matrix, steering_vector};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn snaps(data: CMatrix) -> SnapshotMatrix {
        SnapshotMatrix::new(data).unwrap()
    }

    #[test]
    fn single_component_responsibilities_are_one() {
        let y = snaps(CMatrix::from_fn(3, 4, |n, t| c(n as f64, t as f64)));
        let r = responsibilities(&y, &CMatrix::zeros(3, 4), &NoiseModel::gaussian(2.0).unwrap()).unwrap();
        assert!(r.as_slice().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn identical_components_split_evenly() {
        let y = snaps(CMatrix::from_fn(2, 3, |n, t| c(n as f64 * 3.0, -(t as f64))));
        let noise = NoiseModel::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let r = responsibilities(&y, &CMatrix::zeros(2, 3), &noise).unwrap();
        assert!(r.as_slice().iter().all(|&w| (w - 0.5).abs() < 1e-15));
    }

    #[test]
    fn impulsive_responsibility_matches_scalar_evaluation() {
        let y = snaps(CMatrix::from_element(1, 1, c(2.0, 0.0)));
        let noise = NoiseModel::new(vec![0.95, 0.05], vec![1.0, 20f64.sqrt()]).unwrap();
        let r = responsibilities(&y, &CMatrix::zeros(1, 1), &noise).unwrap();
        let a = 0.95 * (-4.0f64).exp();
        let b = 0.0025 * (-0.2f64).exp();
        assert_abs_diff_eq!(r.get(0, 0, 0), a / (a + b), epsilon = 1e-14);
        assert_abs_diff_eq!(r.get(0, 0, 1), b / (a + b), epsilon = 1e-14);
    }

    #[test]
    fn huge_residuals_stay_positive_and_normalized() {
        let y = snaps(CMatrix::from_element(1, 1, c(1e6, 0.0)));
        let noise = NoiseModel::new(vec![0.95, 0.05], vec![1.0, 20f64.sqrt()]).unwrap();
        let r = responsibilities(&y, &CMatrix::zeros(1, 1), &noise).unwrap();
        assert!(r.min_weight() > 0.0);
        assert!(r.max_normalization_error() < 1e-12);
        assert_abs_diff_eq!(r.get(0, 0, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_diagonal_examples() {
        let r = Responsibilities::from_raw(3, 1, 1, vec![1.0; 3]).unwrap();
        let w = weight_diagonal(&r, &NoiseModel::gaussian(1.0).unwrap(), 0);
        assert_eq!(w.entries(), &[1.0, 1.0, 1.0]);

        let r = Responsibilities::from_raw(2, 1, 2, vec![0.5; 4]).unwrap();
        let noise = NoiseModel::new(vec![0.5, 0.5], vec![1.0, 2.0]).unwrap();
        let w = weight_diagonal(&r, &noise, 0);
        assert_eq!(w.entries(), &[0.625, 0.625]);
        assert_abs_diff_eq!(w.trace(), 1.25);
    }

    #[test]
    fn weight_diagonal_for_reference_noise_is_harmonic_mix() {
        let noise = NoiseModel::new(vec![0.95, 0.05], vec![1.0, 20f64.sqrt()]).unwrap();
        let y = snaps(CMatrix::from_fn(4, 2, |n, t| c(n as f64, 2.0 * t as f64)));
        let r = responsibilities(&y, &CMatrix::zeros(4, 2), &noise).unwrap();
        for t in 0..2 {
            let w = weight_diagonal(&r, &noise, t);
            for n in 0..4 {
                let expect = r.get(n, t, 0) + r.get(n, t, 1) / 20.0;
                assert_abs_diff_eq!(w.entries()[n], expect, epsilon = 1e-15);
                assert!(w.entries()[n] >= 1.0 / 20.0 && w.entries()[n] <= 1.0);
            }
        }
    }

    #[test]
    fn single_source_matched_filter() {
        let a = steering_vector(1.1, 5).unwrap();
        let y = snaps(CMatrix::from_fn(5, 3, |n, t| a[n] * c(1.0 + t as f64, -0.5) + c(0.1 * n as f64, 0.0)));
        let w = vec![WeightDiagonal::identity(5); 3];
        let s = multi_source_signal_update(&y, &manifold_matrix(&[1.1], 5).unwrap(), &w).unwrap();
        for t in 0..3 {
            let mf: Complex64 = a.iter().zip(y.data().column(t).iter()).map(|(x, v)| x.conj() * v).sum::<Complex64>() / 5.0;
            assert!((s[(0, t)] - mf).norm() < 1e-13);
        }
    }

    #[test]
    fn noiseless_multi_source_recovery() {
        let a = manifold_matrix(&[0.6, 1.9], 6).unwrap();
        let s_true = CMatrix::from_fn(2, 4, |m, t| c(1.0 + m as f64, t as f64 - 1.5));
        let y = snaps(&a * &s_true);
        let w: Vec<_> = (0..4)
            .map(|t| WeightDiagonal::new((0..6).map(|n| 0.5 + 0.1 * (n + t) as f64).collect()).unwrap())
            .collect();
        let s = multi_source_signal_update(&y, &a, &w).unwrap();
        assert!((s - s_true).iter().all(|d| d.norm() < 1e-10));
    }

    #[test]
    fn coincident_sources_use_ridge() {
        let a = manifold_matrix(&[1.0, 1.0], 4).unwrap();
        let y = snaps(CMatrix::from_fn(4, 2, |n, _| a[(n, 0)] * 2.0));
        let w = vec![WeightDiagonal::identity(4); 2];
        let s = multi_source_signal_update(&y, &a, &w).unwrap();
        for t in 0..2 {
            assert!((s[(0, t)] + s[(1, t)] - c(2.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn extreme_weights_keep_exact_fit() {
        // One sensor weighted 1e16 times the others: the weighted Gram is far
        // beyond the ridge limit but the geometry is fine, so the fit must be
        // the unregularized one. Oracle: exact fit on sensor 0 plus the
        // closed-form solution in the remaining direction.
        let a = manifold_matrix(&[0.7, 2.0], 3).unwrap();
        let y = snaps(CMatrix::from_fn(3, 1, |n, _| c(n as f64 - 0.5, 0.3 * n as f64 + 1.0)));
        let w = vec![WeightDiagonal::new(vec![1e16, 1.0, 2.0]).unwrap()];
        let s = multi_source_signal_update(&y, &a, &w).unwrap();
        let fit0 = a[(0, 0)] * s[(0, 0)] + a[(0, 1)] * s[(1, 0)];
        assert!((fit0 - y.data()[(0, 0)]).norm() < 1e-9);

        // With sensor 0 pinned, s_1 = (y_0 - a_00 s_0) / a_01; minimize the rest over s_0.
        let pinned = |s0: Complex64| {
            let s1 = (y.data()[(0, 0)] - a[(0, 0)] * s0) / a[(0, 1)];
            (1..3)
                .map(|n| {
                    let wn = [1e16, 1.0, 2.0][n];
                    wn * (y.data()[(n, 0)] - a[(n, 0)] * s0 - a[(n, 1)] * s1).norm_sqr()
                })
                .sum::<f64>()
        };
        // The pinned misfit is quadratic in s0: residual r_n(s0) = p_n + q_n s0.
        let mut num = c(0.0, 0.0);
        let mut den = 0.0;
        for n in 1..3 {
            let wn = [1e16, 1.0, 2.0][n];
            let q = -a[(n, 0)] + a[(n, 1)] * a[(0, 0)] / a[(0, 1)];
            let p = y.data()[(n, 0)] - a[(n, 1)] * y.data()[(0, 0)] / a[(0, 1)];
            num += q.conj() * p * wn;
            den += wn * q.norm_sqr();
        }
        let s0 = -num / den;
        assert!((s[(0, 0)] - s0).norm() < 1e-6);
        assert!(pinned(s[(0, 0)]) <= pinned(s0) * (1.0 + 1e-9));
    }

    #[test]
    fn too_many_sources_rejected() {
        let a = manifold_matrix(&[0.5, 1.5], 2).unwrap();
        let y = snaps(CMatrix::zeros(2, 1));
        let err = multi_source_signal_update(&y, &a, &[WeightDiagonal::identity(2)]);
        assert!(matches!(err, Err(Error::Structure(_))));
    }

    #[test]
    fn single_source_update_examples() {
        let theta = 0.8;
        let a = steering_vector(theta, 6).unwrap();
        let w = WeightDiagonal::identity(6);
        let coef = c(0.3, -1.2);
        let s = single_source_signal_update(&(&a * coef), theta, &w);
        assert!((s - coef).norm() < 1e-15);

        // Orthogonal target: steering vector of a grid-orthogonal direction.
        let u0 = theta.cos();
        let other = steering_from_cosine(u0 + 2.0 / 6.0, 6);
        let s = single_source_signal_update(&other, theta, &w);
        assert!(s.norm() < 1e-14);
    }

    #[test]
    fn objective_peak_for_noiseless_single_source() {
        let theta = 1.2;
        let n = 6;
        let a = steering_vector(theta, n).unwrap();
        let s: Vec<Complex64> = (0..5).map(|t| c(1.0, 0.2 * t as f64)).collect();
        let targets = CMatrix::from_fn(n, 5, |i, t| a[i] * s[t]);
        let w = vec![WeightDiagonal::identity(n); 5];
        let g = doa_objective(&targets, &w).unwrap();
        let power: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        assert_abs_diff_eq!(g.value(theta.cos()), n as f64 * power, epsilon = 1e-10);
        for k in 1..200 {
            let u = -1.0 + k as f64 / 100.0;
            assert!(g.value(u) <= g.value(theta.cos()) + 1e-9);
        }
    }

    #[test]
    fn objective_of_zero_targets_is_zero() {
        let g = doa_objective(&CMatrix::zeros(4, 3), &vec![WeightDiagonal::identity(4); 3]).unwrap();
        for k in 0..21 {
            assert_eq!(g.value(-1.0 + 0.1 * k as f64), 0.0);
        }
    }

    #[test]
    fn objective_matches_direct_sum() {
        let n = 5;
        let targets = CMatrix::from_fn(n, 3, |i, t| c((i * 3 + t) as f64 * 0.37 - 1.0, (i as f64 - t as f64).sin()));
        let w: Vec<_> = (0..3)
            .map(|t| WeightDiagonal::new((0..n).map(|i| 0.2 + ((i + 2 * t) % 4) as f64).collect()).unwrap())
            .collect();
        let g = doa_objective(&targets, &w).unwrap();
        for k in 1..40 {
            let theta = PI * k as f64 / 40.0;
            let a = steering_vector(theta, n).unwrap();
            let direct: f64 = (0..3)
                .map(|t| {
                    let p: Complex64 = (0..n).map(|i| a[i].conj() * w[t].entries()[i] * targets[(i, t)]).sum();
                    p.norm_sqr() / w[t].trace()
                })
                .sum();
            assert_abs_diff_eq!(g.value_at_angle(theta), direct, epsilon = 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn noise_update_examples() {
        let r = Responsibilities::from_raw(2, 3, 2, vec![0.5; 12]).unwrap();
        let res = DMatrix::from_element(2, 3, 4.0);
        let up = noise_param_update(&r, &res).unwrap();
        assert_eq!(up.noise.mixing(), &[0.5, 0.5]);
        assert_abs_diff_eq!(up.noise.stddevs()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(up.noise.stddevs()[1], 2.0, epsilon = 1e-15);

        let r = Responsibilities::from_raw(2, 2, 1, vec![1.0; 4]).unwrap();
        let res = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        let up = noise_param_update(&r, &res).unwrap();
        assert_eq!(up.noise.mixing(), &[1.0]);
        assert_abs_diff_eq!(up.noise.stddevs()[0], 3f64.sqrt(), epsilon = 1e-15);
        assert!(up.floored.is_empty());
    }

    #[test]
    fn zero_residuals_floor_sigma() {
        let r = Responsibilities::from_raw(2, 2, 2, vec![0.5; 8]).unwrap();
        let up = noise_param_update(&r, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(up.noise.stddevs(), &[SIGMA_FLOOR, SIGMA_FLOOR]);
        assert_eq!(up.floored, vec![0, 1]);
    }

    #[test]
    fn negative_residual_rejected() {
        let r = Responsibilities::from_raw(1, 1, 1, vec![1.0]).unwrap();
        assert!(noise_param_update(&r, &DMatrix::from_element(1, 1, -1.0)).is_err());
    }
}
