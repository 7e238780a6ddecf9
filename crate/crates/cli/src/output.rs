use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::runner::{Rows, RunOutput, TaggedRecord};
use crate::CliError;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const TRACE_JSONL: &str = "trace.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub metric: String,
    pub count: usize,
    pub min: String,
    pub median: String,
    pub max: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool_version: &'static str,
    pub config_sha256: String,
    pub config: &'a ExperimentConfig,
    pub seeds: &'a [u64],
    pub rows: usize,
    pub errors: &'a [String],
    pub created_unix: u64,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Canonical JSON hash of the effective configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes every output file and returns the paths written.
pub fn write_all(cfg: &ExperimentConfig, run: &RunOutput) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut written = Vec::new();
    let results = match cfg.format {
        Format::Csv => cfg.out.join(RESULTS_CSV),
        Format::Json => cfg.out.join(RESULTS_JSON),
    };
    match (&run.rows, cfg.format) {
        (Rows::GenSdp(r), Format::Csv) => write_csv(&results, r)?,
        (Rows::Qcqp(r), Format::Csv) => write_csv(&results, r)?,
        (Rows::Selftest(r), Format::Csv) => write_csv(&results, r)?,
        (Rows::GenSdp(r), Format::Json) => write_json(&results, r)?,
        (Rows::Qcqp(r), Format::Json) => write_json(&results, r)?,
        (Rows::Selftest(r), Format::Json) => write_json(&results, r)?,
    }
    written.push(results);

    let summary = cfg.out.join(SUMMARY_CSV);
    write_csv(&summary, &summarize(&run.rows))?;
    written.push(summary);

    if cfg.trace {
        let path = cfg.out.join(TRACE_JSONL);
        write_trace(&path, &run.traces)?;
        written.push(path);
    }

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash(cfg),
        config: cfg,
        seeds: &cfg.seeds,
        rows: run.rows.len(),
        errors: &run.errors,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let path = cfg.out.join(MANIFEST_JSON);
    write_json(&path, &manifest)?;
    written.push(path);
    Ok(written)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(f).and_then(|_| f.flush()).map_err(io_err(path))
}

fn write_trace(path: &Path, records: &[TaggedRecord]) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(f).map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

/// Min, median and max; the median of an even count averages the middle pair.
pub fn order_stats(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    Some((v[0], median, v[k - 1]))
}

/// Scientific notation with two decimals; magnitudes below 1e-20 print as `0`.
pub fn format_stat(x: f64) -> String {
    if x.abs() < 1e-20 {
        "0".into()
    } else {
        format!("{x:.2e}")
    }
}

fn stat_row(group: &str, metric: &str, values: &[f64]) -> SummaryRow {
    let (min, median, max) = match order_stats(values) {
        Some((a, b, c)) => (format_stat(a), format_stat(b), format_stat(c)),
        None => (String::new(), String::new(), String::new()),
    };
    SummaryRow { group: group.into(), metric: metric.into(), count: values.len(), min, median, max }
}

fn count_row(group: &str, metric: &str, hits: usize, total: usize) -> SummaryRow {
    SummaryRow {
        group: group.into(),
        metric: metric.into(),
        count: total,
        min: String::new(),
        median: hits.to_string(),
        max: String::new(),
    }
}

/// Groups keep first-appearance order.
fn groups<T, K: PartialEq + Clone>(rows: &[T], key: impl Fn(&T) -> K) -> Vec<(K, Vec<&T>)> {
    let mut out: Vec<(K, Vec<&T>)> = Vec::new();
    for r in rows {
        let k = key(r);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

/// Per-group statistics. Solved counts go in the `median` column.
pub fn summarize(rows: &Rows) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    match rows {
        Rows::GenSdp(rows) => {
            for (n, g) in groups(rows, |r| r.n) {
                let name = format!("n={n}");
                let col = |f: fn(&crate::runner::GenSdpRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
                out.push(stat_row(&name, "dist_to_opt", &col(|r| r.dist_to_opt)));
                out.push(stat_row(&name, "residual_eq", &col(|r| r.residual_eq)));
                out.push(stat_row(&name, "residual_ineq", &col(|r| r.residual_ineq)));
                out.push(stat_row(&name, "iterations", &col(|r| r.iterations as f64)));
                out.push(count_row(&name, "solved", g.iter().filter(|r| r.solved).count(), g.len()));
            }
        }
        Rows::Qcqp(rows) => {
            for ((m, delta), g) in groups(rows, |r| (r.m, r.delta.to_bits())) {
                let name = format!("m={m} delta={}", f64::from_bits(delta));
                let gap = |f: fn(&crate::runner::QcqpRow) -> Option<f64>| {
                    g.iter().filter_map(|r| f(r).map(|v| (v - r.oracle_opt).abs())).collect::<Vec<_>>()
                };
                out.push(stat_row(&name, "sdr_random_gap", &gap(|r| Some(r.sdr_random))));
                out.push(stat_row(&name, "ours_random_gap", &gap(|r| r.ours_random)));
                out.push(stat_row(&name, "ours_project_gap", &gap(|r| r.ours_project)));
                let bound: Vec<f64> = g.iter().map(|r| r.sdr_orig - r.oracle_opt).collect();
                out.push(stat_row(&name, "sdr_minus_oracle", &bound));
                let n = g.len();
                out.push(count_row(&name, "sdr_random_solved", g.iter().filter(|r| r.sdr_random_solved).count(), n));
                out.push(count_row(&name, "ours_random_solved", g.iter().filter(|r| r.ours_random_solved).count(), n));
                out.push(count_row(&name, "ours_project_solved", g.iter().filter(|r| r.ours_project_solved).count(), n));
            }
        }
        Rows::Selftest(rows) => {
            for (check, g) in groups(rows, |r| r.check.clone()) {
                let values: Vec<f64> = g.iter().map(|r| r.value).collect();
                out.push(stat_row(&check, "value", &values));
                out.push(count_row(&check, "passed", g.iter().filter(|r| r.passed).count(), g.len()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_median_averages_middle_pair() {
        assert_eq!(order_stats(&[4.0, 1.0, 3.0, 2.0]), Some((1.0, 2.5, 4.0)));
        assert_eq!(order_stats(&[5.0, 1.0, 3.0]), Some((1.0, 3.0, 5.0)));
        assert_eq!(order_stats(&[]), None);
    }

    #[test]
    fn tiny_values_print_as_zero() {
        assert_eq!(format_stat(1e-21), "0");
        assert_eq!(format_stat(-0.0), "0");
        assert_eq!(format_stat(1.234e-7), "1.23e-7");
    }
}
