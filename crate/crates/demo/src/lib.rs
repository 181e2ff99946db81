//! Browser bindings for the SAGE / AECM estimators. Each export takes the
//! experiment as TOML text and returns JSON for the page to plot.

use doa_em::aecm;
use doa_em::em_common::{doa_objective, weight_diagonals};
use doa_em::harness::{self, parse_config, Algorithm, ExperimentConfig};
use doa_em::sage;
use doa_em::SearchKind;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct TraceJson {
    truth_deg: Vec<f64>,
    iterations_to_threshold: Option<usize>,
    rows: Vec<RowJson>,
}

#[derive(Serialize)]
struct RowJson {
    iter: usize,
    doas_deg: Vec<f64>,
    errors_deg: Vec<f64>,
    mixing: Vec<f64>,
    stddevs: Vec<f64>,
    loglik: f64,
    wall_ms: f64,
}

#[derive(Serialize)]
struct CompareJson {
    seeds: Vec<u64>,
    sage_iters: Vec<Option<usize>>,
    aecm_iters: Vec<Option<usize>>,
    sage_final_err: Vec<f64>,
    aecm_final_err: Vec<f64>,
    sage_mean_iter_ms: f64,
    aecm_mean_iter_ms: f64,
    aecm_not_slower: f64,
}

#[derive(Serialize)]
struct LandscapeJson {
    theta_deg: Vec<f64>,
    /// One normalized curve per source.
    curves: Vec<Vec<f64>>,
    initial_deg: Vec<f64>,
    truth_deg: Vec<f64>,
}

fn config_with(
    config_toml: &str,
    algorithm: &str,
    search: &str,
    iterations: usize,
    seed: u64,
) -> Result<ExperimentConfig, String> {
    let mut config = parse_config(config_toml).map_err(|e| e.to_string())?;
    config.algorithm = algorithm.parse::<Algorithm>().map_err(|e| e.to_string())?;
    config.search = search.parse::<SearchKind>().map_err(|e| e.to_string())?;
    config.iterations = iterations;
    config.seed = seed;
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

pub fn trace_json(
    config_toml: &str,
    algorithm: &str,
    search: &str,
    iterations: usize,
    seed: u64,
) -> Result<String, String> {
    let config = config_with(config_toml, algorithm, search, iterations, seed)?;
    let outcome = harness::run_experiment(&config).map_err(|e| e.to_string())?;
    let rows = outcome
        .trace
        .iteration_rows()
        .map(|r| RowJson {
            iter: r.iteration,
            doas_deg: r.doas_deg.clone(),
            errors_deg: r.errors_deg.clone(),
            mixing: r.mixing.clone(),
            stddevs: r.stddevs.clone(),
            loglik: r.loglik,
            wall_ms: r.wall_ms,
        })
        .collect();
    to_json(&TraceJson {
        truth_deg: config.true_doas_deg.clone(),
        iterations_to_threshold: outcome
            .trace
            .iterations_to_threshold(harness::CONVERGENCE_THRESHOLD_DEG),
        rows,
    })
}

pub fn compare_json(
    config_toml: &str,
    search: &str,
    iterations: usize,
    seeds: usize,
) -> Result<String, String> {
    if seeds == 0 {
        return Err("need at least one seed".into());
    }
    let config = config_with(config_toml, "sage", search, iterations, 0)?;
    let summary = harness::compare_runs(&config, seeds).map_err(|e| e.to_string())?;
    let (sage_ms, aecm_ms) = summary.mean_iteration_ms();
    let r = &summary.rows;
    to_json(&CompareJson {
        seeds: r.iter().map(|x| x.seed).collect(),
        sage_iters: r.iter().map(|x| x.sage.iterations_to_threshold).collect(),
        aecm_iters: r.iter().map(|x| x.aecm.iterations_to_threshold).collect(),
        sage_final_err: r.iter().map(|x| x.sage.final_max_error_deg).collect(),
        aecm_final_err: r.iter().map(|x| x.aecm.final_max_error_deg).collect(),
        sage_mean_iter_ms: sage_ms,
        aecm_mean_iter_ms: aecm_ms,
        aecm_not_slower: summary.fraction(|x| x.aecm_not_slower()),
    })
}

/// First-iteration DOA objectives over `points` angles in (0, 180) degrees.
/// SAGE curves all come from the initial estimate; AECM curve `m` is taken
/// after cycles `1..m` have updated the earlier sources.
pub fn landscape_json(
    config_toml: &str,
    algorithm: &str,
    seed: u64,
    points: usize,
) -> Result<String, String> {
    let points = points.clamp(16, 4000);
    let config = config_with(config_toml, algorithm, "golden", 1, seed)?;
    let err = |e: doa_em::Error| e.to_string();
    let snapshots = harness::synthesize(&config).map_err(err)?;
    let mut estimate = config.initial_estimate().map_err(err)?;
    let theta_deg: Vec<f64> = (1..=points)
        .map(|i| 180.0 * i as f64 / (points + 1) as f64)
        .collect();
    let sample = |objective: &doa_em::em_common::DoaObjective| -> Vec<f64> {
        let raw: Vec<f64> = theta_deg
            .iter()
            .map(|d| objective.value_at_angle(d.to_radians()))
            .collect();
        let peak = raw.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        raw.iter().map(|v| v / peak).collect()
    };
    let initial_deg = estimate.doas.iter().map(|d| d.to_degrees()).collect();
    let mut curves = Vec::new();
    match config.algorithm {
        Algorithm::Sage => {
            let (resp, mu) = sage::estep1(&snapshots, &estimate).map_err(err)?;
            let weights = weight_diagonals(&resp, &estimate.noise);
            for target in &mu {
                curves.push(sample(&doa_objective(target, &weights).map_err(err)?));
            }
        }
        Algorithm::Aecm => {
            let search = doa_em::DoaSearchStrategy::golden();
            for m in 0..estimate.num_sources() {
                let (resp, eta) = aecm::estep_m(&snapshots, &estimate, m).map_err(err)?;
                let weights = weight_diagonals(&resp, &estimate.noise);
                curves.push(sample(&doa_objective(&eta, &weights).map_err(err)?));
                let (theta, row) = aecm::cmstep_m(&resp, &eta, &estimate.noise, &search, estimate.doas[m])
                    .map_err(err)?;
                estimate.doas[m] = theta;
                for (t, v) in row.into_iter().enumerate() {
                    estimate.waveforms[(m, t)] = v;
                }
            }
        }
    }
    to_json(&LandscapeJson {
        theta_deg,
        curves,
        initial_deg,
        truth_deg: config.true_doas_deg.clone(),
    })
}

#[wasm_bindgen]
pub fn default_config() -> String {
    ExperimentConfig::default().to_toml()
}

#[wasm_bindgen]
pub fn run_trace(
    config_toml: &str,
    algorithm: &str,
    search: &str,
    iterations: usize,
    seed: u64,
) -> Result<String, JsValue> {
    trace_json(config_toml, algorithm, search, iterations, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_seeds(
    config_toml: &str,
    search: &str,
    iterations: usize,
    seeds: usize,
) -> Result<String, JsValue> {
    compare_json(config_toml, search, iterations, seeds).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn objective_landscape(
    config_toml: &str,
    algorithm: &str,
    seed: u64,
    points: usize,
) -> Result<String, JsValue> {
    landscape_json(config_toml, algorithm, seed, points).map_err(|e| JsValue::from_str(&e))
}
