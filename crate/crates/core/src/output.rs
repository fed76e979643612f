//! Result files and run manifests.
//!
//! Each experiment kind is written to its own file, `<kind>.csv` or
//! `<kind>.jsonl`, with one record per parameter point. Result files depend
//! only on the configuration, seed and crate version; wall-clock times and
//! worker counts go to `manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::{BoxCountResult, CapacityBound, CollisionRegime};
use crate::config::{emit_config, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{CollisionStats, ExponentFit, OracleReport, PhaseSweep, RefinementStudy, SmallTimeStudy};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::config("format", format!("expected csv or jsonl, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Missing, Value::Float)
    }
}

impl Value {
    /// 17 significant digits; non-finite values spelled out.
    fn csv_text(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(f) if f.is_finite() => format!("{f:.16e}"),
            Value::Float(f) => non_finite(*f).to_string(),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => (*i).into(),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or_else(|| non_finite(*f).into()),
            Value::Text(s) => s.clone().into(),
            Value::Missing => serde_json::Value::Null,
        }
    }
}

fn non_finite(f: f64) -> &'static str {
    if f.is_nan() {
        "nan"
    } else if f > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

/// One row of a result table. Every record names its experiment kind, the run
/// it belongs to and the regime predicted for its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub kind: String,
    pub run_id: String,
    pub regime: Option<CollisionRegime>,
    pub values: Vec<(String, Value)>,
}

impl ResultRecord {
    pub fn new(kind: &str, run_id: &str, regime: Option<CollisionRegime>) -> Self {
        ResultRecord { kind: kind.to_string(), run_id: run_id.to_string(), regime, values: Vec::new() }
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.values.push((name.to_string(), value.into()));
        self
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["kind".to_string(), "run_id".to_string(), "regime".to_string()];
        h.extend(self.values.iter().map(|(k, _)| k.clone()));
        h
    }

    fn cells(&self) -> Vec<Value> {
        let mut c = vec![
            Value::Text(self.kind.clone()),
            Value::Text(self.run_id.clone()),
            self.regime.map_or(Value::Missing, |r| Value::Text(r.to_string())),
        ];
        c.extend(self.values.iter().map(|(_, v)| v.clone()));
        c
    }
}

/// Stable identifier of a run: hash of the emitted configuration, the command
/// and the crate version.
pub fn run_id(config: &RunConfig, command: &str) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(emit_config(config)?.as_bytes());
    hasher.update(command.as_bytes());
    hasher.update(VERSION.as_bytes());
    Ok(hex::encode(&hasher.finalize()[..8]))
}

/// Write records sharing one column layout.
pub fn write_records(path: &Path, format: Format, records: &[ResultRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if let Some(first) = records.first() {
                let header = first.header();
                w.write_record(&header)?;
                for r in records {
                    if r.header() != header {
                        return Err(Error::domain("records in one table must share their columns"));
                    }
                    w.write_record(r.cells().iter().map(Value::csv_text))?;
                }
            }
            w.flush()?;
        }
        Format::Jsonl => {
            for r in records {
                let mut map = serde_json::Map::new();
                for (k, v) in r.header().into_iter().zip(r.cells()) {
                    map.insert(k, v.json());
                }
                serde_json::to_writer(&mut out, &serde_json::Value::Object(map))?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Write `<dir>/<kind>.<ext>` and return its path.
pub fn write_table(dir: &Path, kind: &str, format: Format, records: &[ResultRecord]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{kind}.{}", format.extension()));
    write_records(&path, format, records)?;
    Ok(path)
}

/// Everything needed to reproduce the result files of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<String>,
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(config: &RunConfig, command: &str, workers: usize) -> Result<Self> {
        Ok(RunManifest {
            run_id: run_id(config, command)?,
            command: command.to_string(),
            version: VERSION.to_string(),
            seed: config.experiment.seed,
            config: emit_config(config)?,
            workers,
            started_unix: unix_now(),
            finished_unix: f64::NAN,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = unix_now();
        std::fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(path)
    }
}

fn collision_record(kind: &str, run: &str, regime: CollisionRegime, s: &CollisionStats) -> ResultRecord {
    ResultRecord::new(kind, run, Some(regime))
        .with("mesh", s.mesh)
        .with("delta", s.delta)
        .with("replicas", s.replicas)
        .with("collisions", s.collisions)
        .with("estimate", s.estimate)
        .with("ci_low", s.interval.low)
        .with("ci_high", s.interval.high)
}

pub fn refinement_records(run: &str, hurst: f64, regime: CollisionRegime, study: &RefinementStudy) -> Vec<ResultRecord> {
    study
        .levels
        .iter()
        .map(|s| {
            collision_record("refinement", run, regime, s)
                .with("hurst", hurst)
                .with("trend", study.trend)
                .with("last_step", study.last_step)
        })
        .collect()
}

pub fn sweep_records(run: &str, sweep: &PhaseSweep) -> Vec<ResultRecord> {
    sweep
        .rows
        .iter()
        .flat_map(|row| {
            row.study.levels.iter().map(move |s| {
                collision_record("sweep", run, row.regime, s)
                    .with("hurst", row.hurst)
                    .with("q", row.q)
                    .with("trend", row.study.trend)
                    .with("separation", sweep.separation)
            })
        })
        .collect()
}

pub fn exponent_records(run: &str, regime: CollisionRegime, beta: u8, fit: &ExponentFit) -> Vec<ResultRecord> {
    vec![ResultRecord::new("gapfit", run, Some(regime))
        .with("slope", fit.slope)
        .with("slope_stderr", fit.stderr)
        .with("expected", beta as f64 + 1.0)
        .with("window_low", fit.window[0])
        .with("window_high", fit.window[1])
        .with("samples", fit.samples)
        .with("points", fit.points)]
}

pub fn capacity_records(run: &str, regime: CollisionRegime, bounds: &[(f64, CapacityBound)]) -> Vec<ResultRecord> {
    bounds
        .iter()
        .map(|(alpha, b)| {
            ResultRecord::new("capacity", run, Some(regime))
                .with("alpha", *alpha)
                .with("bound", b.bound)
                .with("energy", b.energy.value)
                .with("energy_stderr", b.energy.stderr)
                .with("pairs", b.energy.pairs)
                .with("infinite_pairs", b.energy.infinite_pairs)
                .with("tail_index", b.energy.tail_index)
                .with("divergent", if b.energy.divergent { "true" } else { "false" })
        })
        .collect()
}

/// Box counting is a surrogate for Hausdorff dimension; the records say so.
pub fn boxdim_records(run: &str, expected: f64, result: &BoxCountResult) -> Vec<ResultRecord> {
    result
        .scales
        .iter()
        .zip(&result.counts)
        .map(|(eps, n)| {
            ResultRecord::new("boxdim", run, None)
                .with("estimator", "box_counting")
                .with("box_size", *eps)
                .with("occupied", *n)
                .with("slope", result.slope)
                .with("slope_stderr", result.slope_stderr)
                .with("residual", result.residual)
                .with("expected", expected)
        })
        .collect()
}

pub fn small_time_records(run: &str, regime: CollisionRegime, study: &SmallTimeStudy) -> Vec<ResultRecord> {
    study
        .rows
        .iter()
        .map(|row| {
            collision_record("small_time", run, regime, &row.stats)
                .with("horizon", row.horizon)
                .with("hypothesis_met", if study.hypothesis_met { "true" } else { "false" })
        })
        .collect()
}

pub fn oracle_records(run: &str, regime: CollisionRegime, report: &OracleReport) -> Vec<ResultRecord> {
    vec![ResultRecord::new("oracle", run, Some(regime))
        .with("max_discrepancy", report.max_discrepancy)
        .with("replicas", report.replicas)
        .with("times", report.times)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::Beta;
    use crate::experiments::ExperimentConfig;
    use crate::fields::HurstVector;

    fn records() -> Vec<ResultRecord> {
        vec![
            ResultRecord::new("t", "abc", Some(CollisionRegime::Collision)).with("x", 0.1).with("n", 3usize).with("y", None),
            ResultRecord::new("t", "abc", None).with("x", f64::INFINITY).with("n", 4usize).with("y", Some(1.0 / 3.0)),
        ]
    }

    #[test]
    fn csv_round_trips_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_table(dir.path(), "t", Format::Csv, &records()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,run_id,regime,x,n,y");
        assert_eq!(lines[1], "t,abc,collision,1.0000000000000001e-1,3,");
        let y: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(y, 1.0 / 3.0);
        assert!(lines[2].contains(",inf,"));
    }

    #[test]
    fn jsonl_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_table(dir.path(), "t", Format::Jsonl, &records()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["regime"], "collision");
        assert_eq!(rows[1]["x"], "inf");
        assert_eq!(rows[1]["y"].as_f64().unwrap(), 1.0 / 3.0);
        assert!(rows[0]["y"].is_null());
    }

    #[test]
    fn mismatched_columns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = records();
        r.push(ResultRecord::new("t", "abc", None).with("z", 1.0));
        assert!(write_table(dir.path(), "t", Format::Csv, &r).is_err());
    }

    #[test]
    fn run_ids_and_manifest() {
        let c = RunConfig::new(ExperimentConfig::new(Beta::Goe, 2, HurstVector::new(&[0.3]).unwrap()));
        let a = run_id(&c, "simulate").unwrap();
        assert_eq!(a, run_id(&c, "simulate").unwrap());
        assert_ne!(a, run_id(&c, "sweep").unwrap());
        assert_eq!(a.len(), 16);
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new(&c, "simulate", 2).unwrap();
        let path = m.write(dir.path()).unwrap();
        let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back.run_id, a);
        assert_eq!(crate::config::parse_config_str(&back.config).unwrap(), c);
        assert!("CSV".parse::<Format>().is_ok() && "xml".parse::<Format>().is_err());
    }
}
