//! Convergence traces and their CSV form.
//!
//! Header: `iter,theta_deg_1..M,err_deg_1..M,lambda_1..L,sigma_1..L,loglik,wall_ms`,
//! plus a trailing `cycle` column for per-cycle traces. Reals are written with
//! 12 significant digits in plain decimal notation; lines end with LF.

use std::io::Write;
use std::path::Path;

use crate::array_model::ParameterEstimate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// 1-based EM-pair / EM-cycle index for per-cycle rows.
    pub cycle: Option<usize>,
    pub doas_deg: Vec<f64>,
    /// Absolute error against the matched true DOA; NaN when truth is unknown.
    pub errors_deg: Vec<f64>,
    pub mixing: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub loglik: f64,
    /// Cumulative wall-clock time spent iterating, in milliseconds.
    pub wall_ms: f64,
}

impl TraceRow {
    pub fn from_estimate(
        iteration: usize,
        cycle: Option<usize>,
        estimate: &ParameterEstimate,
        truth_deg: Option<&[f64]>,
        loglik: f64,
        wall_ms: f64,
    ) -> Self {
        let doas_deg: Vec<f64> = estimate.doas.iter().map(|d| d.to_degrees()).collect();
        let errors_deg = match truth_deg {
            Some(truth) => matched_errors(&doas_deg, truth),
            None => vec![f64::NAN; doas_deg.len()],
        };
        Self {
            iteration,
            cycle,
            doas_deg,
            errors_deg,
            mixing: estimate.noise.mixing().to_vec(),
            stddevs: estimate.noise.stddevs().to_vec(),
            loglik,
            wall_ms,
        }
    }

    pub fn max_error_deg(&self) -> f64 {
        self.errors_deg.iter().copied().fold(0.0, f64::max)
    }
}

/// Greedy nearest-truth assignment: repeatedly pair the closest remaining
/// (estimate, truth) couple. Returns per-estimate absolute errors in the
/// estimates' order. Unpaired estimates (more estimates than truths) get NaN.
pub fn matched_errors(estimates: &[f64], truth: &[f64]) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(estimates.len() * truth.len());
    for (i, e) in estimates.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            pairs.push(((e - t).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![f64::NAN; estimates.len()];
    let mut used_truth = vec![false; truth.len()];
    for (d, i, j) in pairs {
        if out[i].is_nan() && !used_truth[j] {
            out[i] = d;
            used_truth[j] = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Rows recorded at iteration boundaries (excludes per-cycle rows).
    pub fn iteration_rows(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.cycle.is_none())
    }

    /// First iteration whose maximum matched DOA error is below `threshold_deg`.
    pub fn iterations_to_threshold(&self, threshold_deg: f64) -> Option<usize> {
        self.iteration_rows()
            .find(|r| r.errors_deg.iter().all(|e| *e < threshold_deg))
            .map(|r| r.iteration)
    }

    /// Number of completed iterations.
    pub fn iterations(&self) -> usize {
        self.iteration_rows().map(|r| r.iteration).max().unwrap_or(0)
    }

    fn has_cycles(&self) -> bool {
        self.rows.iter().any(|r| r.cycle.is_some())
    }

    pub fn header(&self) -> String {
        let (m, l) = self
            .rows
            .first()
            .map(|r| (r.doas_deg.len(), r.mixing.len()))
            .unwrap_or((0, 0));
        let mut cols = vec!["iter".to_string()];
        cols.extend((1..=m).map(|i| format!("theta_deg_{i}")));
        cols.extend((1..=m).map(|i| format!("err_deg_{i}")));
        cols.extend((1..=l).map(|i| format!("lambda_{i}")));
        cols.extend((1..=l).map(|i| format!("sigma_{i}")));
        cols.push("loglik".into());
        cols.push("wall_ms".into());
        if self.has_cycles() {
            cols.push("cycle".into());
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cycles = self.has_cycles();
        writeln!(w, "{}", self.header())?;
        for r in &self.rows {
            let mut fields = vec![r.iteration.to_string()];
            fields.extend(r.doas_deg.iter().map(|&v| format_sig12(v)));
            fields.extend(r.errors_deg.iter().map(|&v| format_sig12(v)));
            fields.extend(r.mixing.iter().map(|&v| format_sig12(v)));
            fields.extend(r.stddevs.iter().map(|&v| format_sig12(v)));
            fields.push(format_sig12(r.loglik));
            fields.push(format_sig12(r.wall_ms));
            if cycles {
                fields.push(r.cycle.map(|c| c.to_string()).unwrap_or_default());
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn emit(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV produced by [`ConvergenceTrace::write_csv`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Structure("empty trace file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let count = |prefix: &str| cols.iter().filter(|c| c.starts_with(prefix)).count();
        let m = count("theta_deg_");
        let l = count("lambda_");
        let has_cycle = cols.last() == Some(&"cycle");
        let expected = 1 + 2 * m + 2 * l + 2 + usize::from(has_cycle);
        if cols.first() != Some(&"iter") || cols.len() != expected {
            return Err(Error::Structure(format!("unrecognized trace header `{header}`")));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != expected {
                return Err(Error::Parse {
                    line: k + 2,
                    column: 1,
                    message: format!("expected {expected} fields, found {}", f.len()),
                });
            }
            let num = |i: usize| -> Result<f64> {
                f[i].parse::<f64>().map_err(|e| Error::Parse {
                    line: k + 2,
                    column: i + 1,
                    message: format!("`{}`: {e}", f[i]),
                })
            };
            let iteration = f[0].parse::<usize>().map_err(|e| Error::Parse {
                line: k + 2,
                column: 1,
                message: e.to_string(),
            })?;
            let range = |a: usize, n: usize| -> Result<Vec<f64>> { (a..a + n).map(num).collect() };
            let cycle = if has_cycle && !f[expected - 1].is_empty() {
                Some(f[expected - 1].parse::<usize>().map_err(|e| Error::Parse {
                    line: k + 2,
                    column: expected,
                    message: e.to_string(),
                })?)
            } else {
                None
            };
            rows.push(TraceRow {
                iteration,
                cycle,
                doas_deg: range(1, m)?,
                errors_deg: range(1 + m, m)?,
                mixing: range(1 + 2 * m, l)?,
                stddevs: range(1 + 2 * m + l, l)?,
                loglik: num(1 + 2 * m + 2 * l)?,
                wall_ms: num(2 + 2 * m + 2 * l)?,
            });
        }
        Ok(Self { rows })
    }
}

impl Default for ConvergenceTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// Plain decimal with 12 significant digits.
pub fn format_sig12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(1.0), "1.00000000000");
        assert_eq!(format_sig12(-3012.5), "-3012.50000000");
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(60.000000000004), "60.0000000000");
        assert_eq!(format_sig12(f64::NAN), "nan");
        assert_eq!(format_sig12(1.5e13), "15000000000000");
    }

    #[test]
    fn greedy_matching() {
        assert_eq!(matched_errors(&[61.0, 99.0], &[60.0, 100.0]), vec![1.0, 1.0]);
        // Both estimates near the strong source: the closer one takes it.
        let e = matched_errors(&[99.0, 100.5], &[60.0, 100.0]);
        assert_eq!(e, vec![39.0, 0.5]);
        let swapped = matched_errors(&[99.0, 100.5], &[100.0, 60.0]);
        assert_eq!(e, swapped);
    }

    #[test]
    fn csv_round_trip() {
        let trace = ConvergenceTrace {
            rows: (0..3)
                .map(|k| TraceRow {
                    iteration: k,
                    cycle: None,
                    doas_deg: vec![55.0 + k as f64 * 1.234567891234, 105.0],
                    errors_deg: vec![5.0, 5.0 / (k + 1) as f64],
                    mixing: vec![0.9, 0.1],
                    stddevs: vec![1.0, 10f64.sqrt()],
                    loglik: -2345.678901234567,
                    wall_ms: k as f64 * 0.37,
                })
                .collect(),
        };
        let text = trace.to_csv_string();
        assert!(text.starts_with(
            "iter,theta_deg_1,theta_deg_2,err_deg_1,err_deg_2,lambda_1,lambda_2,sigma_1,sigma_2,loglik,wall_ms\n"
        ));
        assert!(!text.contains('\r'));
        let back = ConvergenceTrace::parse_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 3);
        for (a, b) in trace.rows.iter().zip(&back.rows) {
            assert_eq!(a.iteration, b.iteration);
            for (x, y) in a.doas_deg.iter().zip(&b.doas_deg) {
                assert!((x - y).abs() <= 1e-11 * x.abs());
            }
            assert!((a.loglik - b.loglik).abs() <= 1e-11 * a.loglik.abs());
        }
    }

    #[test]
    fn parse_rejects_bad_rows() {
        let bad = "iter,theta_deg_1,err_deg_1,lambda_1,sigma_1,loglik,wall_ms\n0,1,2,3\n";
        assert!(matches!(ConvergenceTrace::parse_csv(bad), Err(Error::Parse { line: 2, .. })));
        assert!(ConvergenceTrace::parse_csv("a,b\n").is_err());
    }
}
