#![allow(dead_code)]

use doa_em::em_common::Responsibilities;
use doa_em::harness::{Algorithm, ExperimentConfig};
use doa_em::{EStep, EmObserver, NoiseModel, SearchKind};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Records the worst responsibility normalization error and the smallest
/// responsibility seen across every E-step it observes.
#[derive(Debug, Clone)]
pub struct ResponsibilityAudit {
    pub worst_sum_error: f64,
    pub min_weight: f64,
    pub estep_count: usize,
}

impl Default for ResponsibilityAudit {
    fn default() -> Self {
        Self {
            worst_sum_error: 0.0,
            min_weight: f64::INFINITY,
            estep_count: 0,
        }
    }
}

impl EmObserver for ResponsibilityAudit {
    fn on_responsibilities(&mut self, _iteration: usize, _step: EStep, resp: &Responsibilities) {
        self.estep_count += 1;
        self.worst_sum_error = self.worst_sum_error.max(resp.max_normalization_error());
        self.min_weight = self.min_weight.min(resp.min_weight());
    }
}

/// Downhill simplex minimizer, restarted from its own best vertex until the
/// restart no longer improves the value.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let mut best = start.to_vec();
    let mut best_val = f(&best);
    let mut step = scale;
    for _ in 0..60 {
        let (x, v) = simplex_run(&f, &best, step);
        let improved = v < best_val - 1e-15 * best_val.abs();
        if v < best_val {
            best = x;
            best_val = v;
        }
        step = if improved { step * 0.5 } else { step * 0.1 };
        if !improved && step < 1e-12 {
            break;
        }
    }
    (best, best_val)
}

fn simplex_run(f: &impl Fn(&[f64]) -> f64, start: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += scale.max(1e-12 * (1.0 + p[i].abs()));
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    for _ in 0..20_000 {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[d] - vals[0]).abs() <= 1e-16 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[d])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[d].min(fr) {
                pts[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    let p: Vec<f64> = pts[0]
                        .iter()
                        .zip(&pts[i])
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    vals[i] = f(&p);
                    pts[i] = p;
                }
            }
        }
    }
    let i = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[i].clone(), vals[i])
}

pub fn random_mixing(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut mixing: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = mixing[..l - 1].iter().sum();
    mixing[l - 1] = 1.0 - head;
    mixing
}

pub fn random_noise(rng: &mut ChaCha8Rng, l: usize) -> NoiseModel {
    let mixing = random_mixing(rng, l);
    let stddevs = (0..l).map(|_| rng.random_range(0.3..3.0)).collect();
    NoiseModel::new(mixing, stddevs).unwrap()
}

/// DOAs in degrees, pairwise at least `min_gap_deg` apart, inside [20, 160].
pub fn separated_doas_deg(rng: &mut ChaCha8Rng, m: usize, min_gap_deg: f64) -> Vec<f64> {
    loop {
        let doas: Vec<f64> = (0..m).map(|_| rng.random_range(20.0..160.0)).collect();
        let ok = (0..m).all(|i| (i + 1..m).all(|j| (doas[i] - doas[j]).abs() >= min_gap_deg));
        if ok {
            return doas;
        }
    }
}

/// A small randomized experiment: `N in 3..=6`, `M in {1, 2}`, `T in 8..=32`, `L in 1..=3`.
pub fn random_small_config(case: u64, algorithm: Algorithm) -> ExperimentConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + case);
    let sensors = rng.random_range(3..=6);
    let m = rng.random_range(1..=2);
    let snapshots = rng.random_range(8..=32);
    let l = rng.random_range(1..=3);
    let truth = separated_doas_deg(&mut rng, m, 25.0);
    let amplitudes = (0..m)
        .map(|_| Complex64::from_polar(rng.random_range(0.5..3.0), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let noise = random_noise(&mut rng, l);
    let initial_doas_deg = truth
        .iter()
        .map(|d| d + rng.random_range(-6.0..6.0))
        .collect();
    let initial_amplitudes = (0..m).map(|_| Complex64::new(1.0, 0.0)).collect();
    let initial_noise = random_noise(&mut rng, l);
    ExperimentConfig {
        sensors,
        true_doas_deg: truth,
        amplitudes,
        snapshots,
        noise,
        initial_doas_deg,
        initial_amplitudes,
        initial_noise,
        algorithm,
        search: SearchKind::Golden,
        iterations: 15,
        seed: case,
        ..ExperimentConfig::default()
    }
}

/// Largest relative drop between consecutive per-iteration log-likelihoods.
pub fn worst_llf_drop(lls: &[f64]) -> f64 {
    lls.windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}
