//! TOML experiment configuration. Angles are in degrees; every key is
//! optional and defaults to the reference two-source scenario:
//!
//! ```toml
//! [array]
//! sensors = 6
//!
//! [sources]
//! doas = [60.0, 100.0]          # degrees
//! amplitudes = [1.0, 3.1622776601683795]
//! phases = [0.0, 0.0]           # degrees, optional
//! snapshots = 200
//!
//! [noise]
//! mixing = [0.95, 0.05]
//! stddevs = [1.0, 4.47213595499958]
//!
//! [initial]
//! doas = [55.0, 105.0]
//! amplitudes = [1.0, 1.0]
//! mixing = [0.9, 0.1]
//! stddevs = [1.0, 3.1622776601683795]
//!
//! [run]
//! algorithm = "aecm"            # or "sage"
//! search = "golden"             # or "grid"
//! iterations = 50
//! seed = 0
//! trace = "iteration"           # or "cycle"
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{CMatrix, NoiseModel, ParameterEstimate, SourceConfig};
use crate::doa_search::SearchKind;
use crate::error::{Error, Result};
use crate::iteration::TraceGranularity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sage,
    Aecm,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sage" => Ok(Algorithm::Sage),
            "aecm" => Ok(Algorithm::Aecm),
            other => Err(Error::invalid("algorithm", format!("unknown algorithm `{other}`"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Sage => "sage",
            Algorithm::Aecm => "aecm",
        })
    }
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sensors: usize,
    pub true_doas_deg: Vec<f64>,
    /// Constant waveform value of each source.
    pub amplitudes: Vec<Complex64>,
    pub snapshots: usize,
    pub noise: NoiseModel,
    pub initial_doas_deg: Vec<f64>,
    pub initial_amplitudes: Vec<Complex64>,
    pub initial_noise: NoiseModel,
    pub algorithm: Algorithm,
    pub search: SearchKind,
    pub iterations: usize,
    pub seed: u64,
    pub granularity: TraceGranularity,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let raw = RawConfig::default();
        raw.validate().expect("built-in defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn num_sources(&self) -> usize {
        self.true_doas_deg.len()
    }

    /// Re-checks all invariants, e.g. after command-line overrides.
    pub fn validate(&self) -> Result<()> {
        RawConfig::from(self).validate().map(|_| ())
    }

    pub fn sources(&self) -> Result<SourceConfig> {
        SourceConfig::constant(
            self.true_doas_deg.iter().map(|d| d.to_radians()).collect(),
            &self.amplitudes,
            self.snapshots,
        )
    }

    pub fn initial_estimate(&self) -> Result<ParameterEstimate> {
        let m = self.initial_amplitudes.len();
        ParameterEstimate::new(
            self.initial_doas_deg.iter().map(|d| d.to_radians()).collect(),
            CMatrix::from_fn(m, self.snapshots, |i, _| self.initial_amplitudes[i]),
            self.initial_noise.clone(),
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config serializes")
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    raw.validate()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    array: RawArray,
    sources: RawSources,
    noise: RawNoise,
    initial: RawInitial,
    run: RawRun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawArray {
    sensors: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSources {
    doas: Vec<f64>,
    amplitudes: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phases: Option<Vec<f64>>,
    snapshots: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawNoise {
    mixing: Vec<f64>,
    stddevs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawInitial {
    doas: Vec<f64>,
    amplitudes: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phases: Option<Vec<f64>>,
    mixing: Vec<f64>,
    stddevs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawRun {
    algorithm: Algorithm,
    search: SearchKind,
    iterations: usize,
    seed: u64,
    trace: TraceGranularity,
}

impl Default for RawArray {
    fn default() -> Self {
        Self { sensors: 6 }
    }
}

impl Default for RawSources {
    fn default() -> Self {
        Self {
            doas: vec![60.0, 100.0],
            amplitudes: vec![1.0, 10f64.sqrt()],
            phases: None,
            snapshots: 200,
        }
    }
}

impl Default for RawNoise {
    fn default() -> Self {
        Self {
            mixing: vec![0.95, 0.05],
            stddevs: vec![1.0, 20f64.sqrt()],
        }
    }
}

impl Default for RawInitial {
    fn default() -> Self {
        Self {
            doas: vec![55.0, 105.0],
            amplitudes: vec![1.0, 1.0],
            phases: None,
            mixing: vec![0.9, 0.1],
            stddevs: vec![1.0, 10f64.sqrt()],
        }
    }
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Aecm,
            search: SearchKind::Golden,
            iterations: 50,
            seed: 0,
            trace: TraceGranularity::Iteration,
        }
    }
}

fn split_complex(values: &[Complex64]) -> (Vec<f64>, Option<Vec<f64>>) {
    let amps = values.iter().map(|v| v.norm()).collect();
    let phases: Vec<f64> = values.iter().map(|v| v.arg().to_degrees()).collect();
    let phases = phases.iter().any(|p| *p != 0.0).then_some(phases);
    (amps, phases)
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(c: &ExperimentConfig) -> Self {
        let (amplitudes, phases) = split_complex(&c.amplitudes);
        let (init_amps, init_phases) = split_complex(&c.initial_amplitudes);
        Self {
            array: RawArray { sensors: c.sensors },
            sources: RawSources {
                doas: c.true_doas_deg.clone(),
                amplitudes,
                phases,
                snapshots: c.snapshots,
            },
            noise: RawNoise {
                mixing: c.noise.mixing().to_vec(),
                stddevs: c.noise.stddevs().to_vec(),
            },
            initial: RawInitial {
                doas: c.initial_doas_deg.clone(),
                amplitudes: init_amps,
                phases: init_phases,
                mixing: c.initial_noise.mixing().to_vec(),
                stddevs: c.initial_noise.stddevs().to_vec(),
            },
            run: RawRun {
                algorithm: c.algorithm,
                search: c.search,
                iterations: c.iterations,
                seed: c.seed,
                trace: c.granularity,
            },
        }
    }
}

fn check_angles(field: &str, values: &[f64]) -> Result<()> {
    for (i, &d) in values.iter().enumerate() {
        if !(d > 0.0 && d < 180.0) {
            return Err(Error::invalid(
                format!("{field}[{i}]"),
                format!("{d} degrees is outside (0, 180)"),
            ));
        }
    }
    Ok(())
}

fn waveform_values(
    field: &str,
    amplitudes: &[f64],
    phases: Option<&Vec<f64>>,
    count: usize,
) -> Result<Vec<Complex64>> {
    if amplitudes.len() != count {
        return Err(Error::invalid(
            format!("{field}.amplitudes"),
            format!("{} values for {count} sources", amplitudes.len()),
        ));
    }
    if let Some((i, a)) = amplitudes.iter().enumerate().find(|(_, a)| !a.is_finite()) {
        return Err(Error::invalid(format!("{field}.amplitudes[{i}]"), format!("{a} is not finite")));
    }
    let zero = vec![0.0; count];
    let phases = phases.unwrap_or(&zero);
    if phases.len() != count {
        return Err(Error::invalid(
            format!("{field}.phases"),
            format!("{} values for {count} sources", phases.len()),
        ));
    }
    Ok(amplitudes
        .iter()
        .zip(phases)
        .map(|(a, p)| Complex64::from_polar(*a, p.to_radians()))
        .collect())
}

fn noise_model(field: &str, mixing: &[f64], stddevs: &[f64]) -> Result<NoiseModel> {
    NoiseModel::new(mixing.to_vec(), stddevs.to_vec()).map_err(|e| match e {
        Error::Invalid { field: f, reason } => Error::Invalid {
            field: format!("{field}.{f}"),
            reason,
        },
        Error::Structure(reason) => Error::Invalid {
            field: field.to_string(),
            reason,
        },
        other => other,
    })
}

impl RawConfig {
    fn validate(&self) -> Result<ExperimentConfig> {
        let sensors = self.array.sensors;
        if sensors < 2 {
            return Err(Error::invalid("array.sensors", "need at least 2 sensors"));
        }
        let m = self.sources.doas.len();
        if m == 0 {
            return Err(Error::invalid("sources.doas", "need at least one source"));
        }
        if sensors <= m {
            return Err(Error::invalid(
                "array.sensors",
                format!("{sensors} sensors cannot resolve {m} sources"),
            ));
        }
        check_angles("sources.doas", &self.sources.doas)?;
        for i in 0..m {
            for j in (i + 1)..m {
                if self.sources.doas[i] == self.sources.doas[j] {
                    return Err(Error::invalid(format!("sources.doas[{j}]"), "duplicate direction"));
                }
            }
        }
        if self.sources.snapshots == 0 {
            return Err(Error::invalid("sources.snapshots", "need at least one snapshot"));
        }
        let amplitudes = waveform_values(
            "sources",
            &self.sources.amplitudes,
            self.sources.phases.as_ref(),
            m,
        )?;
        let noise = noise_model("noise", &self.noise.mixing, &self.noise.stddevs)?;

        if self.initial.doas.len() != m {
            return Err(Error::invalid(
                "initial.doas",
                format!("{} initial angles for {m} sources", self.initial.doas.len()),
            ));
        }
        check_angles("initial.doas", &self.initial.doas)?;
        let initial_amplitudes = waveform_values(
            "initial",
            &self.initial.amplitudes,
            self.initial.phases.as_ref(),
            m,
        )?;
        let initial_noise = noise_model("initial", &self.initial.mixing, &self.initial.stddevs)?;
        if self.run.iterations == 0 {
            return Err(Error::invalid("run.iterations", "need at least one iteration"));
        }
        Ok(ExperimentConfig {
            sensors,
            true_doas_deg: self.sources.doas.clone(),
            amplitudes,
            snapshots: self.sources.snapshots,
            noise,
            initial_doas_deg: self.initial.doas.clone(),
            initial_amplitudes,
            initial_noise,
            algorithm: self.run.algorithm,
            search: self.run.search,
            iterations: self.run.iterations,
            seed: self.run.seed,
            granularity: self.run.trace,
        })
    }
}
