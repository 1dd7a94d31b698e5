//! Named, seeded, reproducible experiments with CSV/JSON reports.

mod scenarios;
mod selftest;

pub use scenarios::{scenario, scenarios, ScenarioDef};
pub use selftest::{selftest, SelftestLine};

use crate::error::{Error, Result};
use crate::exec::Execution;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

/// Keys every scenario accepts besides its own parameters.
pub const RESERVED_KEYS: [&str; 6] = [
    "n_samples",
    "seed",
    "quad_nodes",
    "curve_grid",
    "surface_grid",
    "mixvol_nodes",
];

/// A scenario parameter: a number or a table of numbers (matrices,
/// polynomial coefficient rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Table(Vec<Vec<f64>>),
}

impl ParamValue {
    /// Parses a command-line value: a number or a TOML array such as
    /// `[[4, 0], [0, 1]]`.
    pub fn parse(text: &str) -> Result<Self> {
        if let Ok(x) = text.trim().parse::<f64>() {
            return Ok(ParamValue::Number(x));
        }
        let doc: toml::Table = toml::from_str(&format!("v = {text}"))
            .map_err(|e| Error::InvalidArgument(format!("cannot parse value {text:?}: {e}")))?;
        Self::from_toml(&doc["v"])
    }

    fn from_toml(v: &toml::Value) -> Result<Self> {
        let num = |v: &toml::Value| match v {
            toml::Value::Integer(i) => Ok(*i as f64),
            toml::Value::Float(x) => Ok(*x),
            other => Err(Error::InvalidArgument(format!("expected a number, got {other}"))),
        };
        match v {
            toml::Value::Array(rows) => {
                let table = rows
                    .iter()
                    .map(|r| match r {
                        toml::Value::Array(xs) => xs.iter().map(num).collect::<Result<Vec<_>>>(),
                        x => Ok(vec![num(x)?]),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ParamValue::Table(table))
            }
            x => Ok(ParamValue::Number(num(x)?)),
        }
    }
}

/// Quadrature and counting resolutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    /// Midpoint nodes per axis for density integrals.
    pub quad_nodes: usize,
    pub curve_grid: usize,
    pub surface_grid: usize,
    /// Gauss–Legendre nodes of the planar mixed-area route.
    pub mixvol_nodes: usize,
}

/// Fully resolved experiment configuration; echoed in JSON reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub params: BTreeMap<String, ParamValue>,
    pub n_samples: usize,
    pub seed: u64,
    pub grids: Grids,
}

impl ExperimentConfig {
    /// Documented defaults of a named scenario.
    pub fn defaults(name: &str) -> Result<Self> {
        let def = scenario(name)?;
        Ok(Self {
            scenario: def.name.to_string(),
            params: (def.params)().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            n_samples: def.n_samples,
            seed: 1,
            grids: def.grids,
        })
    }

    /// Defaults overlaid with the scenario's table of a TOML document. Tables
    /// other than scenario names and keys the scenario does not know are
    /// rejected.
    pub fn from_toml_str(text: &str, name: &str) -> Result<Self> {
        let doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        for (k, v) in &doc {
            scenario(k)?;
            if !v.is_table() {
                return Err(Error::InvalidArgument(format!("config: `{k}` must be a table")));
            }
        }
        let mut cfg = Self::defaults(name)?;
        if let Some(toml::Value::Table(t)) = doc.get(name) {
            for (k, v) in t {
                cfg.set(k, ParamValue::from_toml(v)?)?;
            }
        }
        Ok(cfg)
    }

    /// Sets a reserved key or a scenario parameter.
    pub fn set(&mut self, key: &str, value: ParamValue) -> Result<()> {
        let count = |v: &ParamValue, min: f64| match v {
            ParamValue::Number(x) if x.fract() == 0.0 && *x >= min && *x <= u64::MAX as f64 => Ok(*x),
            _ => Err(Error::InvalidArgument(format!(
                "`{key}` must be an integer ≥ {min}, got {v:?}"
            ))),
        };
        match key {
            "n_samples" => self.n_samples = count(&value, 2.0)? as usize,
            "seed" => self.seed = count(&value, 0.0)? as u64,
            "quad_nodes" => self.grids.quad_nodes = count(&value, 2.0)? as usize,
            "curve_grid" => self.grids.curve_grid = count(&value, 8.0)? as usize,
            "surface_grid" => self.grids.surface_grid = count(&value, 8.0)? as usize,
            "mixvol_nodes" => self.grids.mixvol_nodes = count(&value, 16.0)? as usize,
            _ => {
                if !self.params.contains_key(key) {
                    return Err(Error::InvalidArgument(format!(
                        "unknown key `{key}` for scenario {}; known: {}",
                        self.scenario,
                        self.known_keys().join(", ")
                    )));
                }
                let slot = self.params.get_mut(key).expect("checked above");
                if std::mem::discriminant(slot) != std::mem::discriminant(&value) {
                    return Err(Error::InvalidArgument(format!(
                        "`{key}` expects a {}",
                        match slot {
                            ParamValue::Number(_) => "number",
                            ParamValue::Table(_) => "table",
                        }
                    )));
                }
                *slot = value;
            }
        }
        Ok(())
    }

    pub fn known_keys(&self) -> Vec<String> {
        RESERVED_KEYS
            .iter()
            .map(|s| s.to_string())
            .chain(self.params.keys().cloned())
            .collect()
    }

    pub fn number(&self, key: &str) -> Result<f64> {
        match self.params.get(key) {
            Some(ParamValue::Number(x)) => Ok(*x),
            _ => Err(Error::InvalidArgument(format!("missing numeric parameter `{key}`"))),
        }
    }

    pub fn table(&self, key: &str) -> Result<&[Vec<f64>]> {
        match self.params.get(key) {
            Some(ParamValue::Table(t)) => Ok(t),
            _ => Err(Error::InvalidArgument(format!("missing table parameter `{key}`"))),
        }
    }

    /// Numeric value of any sweepable key.
    pub fn numeric_value(&self, key: &str) -> Result<f64> {
        match key {
            "n_samples" => Ok(self.n_samples as f64),
            "seed" => Ok(self.seed as f64),
            "quad_nodes" => Ok(self.grids.quad_nodes as f64),
            "curve_grid" => Ok(self.grids.curve_grid as f64),
            "surface_grid" => Ok(self.grids.surface_grid as f64),
            "mixvol_nodes" => Ok(self.grids.mixvol_nodes as f64),
            _ => self.number(key),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub exec: Execution,
    /// Record wall time; off gives byte-identical reports across runs.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            exec: Execution::Parallel,
            timing: true,
        }
    }
}

/// What a scenario produces before bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub estimate: f64,
    pub stderr: f64,
    pub prediction: Option<f64>,
    pub prediction_error: f64,
    pub degenerate_events: usize,
}

/// One report row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub estimate: f64,
    pub stderr: f64,
    pub prediction: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub degenerate_events: usize,
    pub wall_time: f64,
    pub prediction_error: f64,
    pub config: ExperimentConfig,
}

impl RunRecord {
    /// `|estimate − prediction| ≤ k·stderr + max(prediction_error, 1e-12·|prediction|)`.
    pub fn within(&self, k: f64) -> bool {
        match (self.prediction, self.abs_err) {
            (Some(p), Some(e)) => e <= k * self.stderr + self.prediction_error.max(1e-12 * p.abs()),
            _ => true,
        }
    }

    /// The exit-status contract: agreement within 4·stderr.
    pub fn passes(&self) -> bool {
        self.within(4.0)
    }
}

/// Executes a scenario.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    let def = scenario(&cfg.scenario)?;
    let start = Instant::now();
    let out = (def.run)(cfg, opts)?;
    let wall_time = if opts.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let abs_err = out.prediction.map(|p| (out.estimate - p).abs());
    let rel_err = out
        .prediction
        .zip(abs_err)
        .map(|(p, e)| if p != 0.0 { e / p.abs() } else { e });
    Ok(RunRecord {
        scenario: cfg.scenario.clone(),
        estimate: out.estimate,
        stderr: out.stderr,
        prediction: out.prediction,
        abs_err,
        rel_err,
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        degenerate_events: out.degenerate_events,
        wall_time,
        prediction_error: out.prediction_error,
        config: cfg.clone(),
    })
}

/// One sweep row: the swept key, its value and the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub parameter: String,
    pub value: f64,
    pub record: RunRecord,
}

/// Repeats `run` with `parameter` set to each value.
pub fn sweep(cfg: &ExperimentConfig, parameter: &str, values: &[f64], opts: &RunOptions) -> Result<Vec<SweepRecord>> {
    cfg.numeric_value(parameter)?;
    values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.set(parameter, ParamValue::Number(v))?;
            Ok(SweepRecord {
                parameter: parameter.to_string(),
                value: v,
                record: run(&c, opts)?,
            })
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 10] = [
    "scenario",
    "estimate",
    "stderr",
    "prediction",
    "abs_err",
    "rel_err",
    "n_samples",
    "seed",
    "degenerate_events",
    "wall_time",
];

/// Round-trippable scientific notation with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn row(r: &RunRecord) -> Vec<String> {
    vec![
        r.scenario.clone(),
        format_float(r.estimate),
        format_float(r.stderr),
        opt(r.prediction),
        opt(r.abs_err),
        opt(r.rel_err),
        r.n_samples.to_string(),
        r.seed.to_string(),
        r.degenerate_events.to_string(),
        format_float(r.wall_time),
    ]
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("writing CSV: {e}"))
}

/// RFC-4180 CSV, one row per run.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.write_record(row(r)).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

/// Long-format sweep CSV: `parameter, value` followed by the run columns.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = ["parameter", "value"].into_iter().chain(CSV_COLUMNS).collect();
    w.write_record(header).map_err(csv_error)?;
    for s in records {
        let mut fields = vec![s.parameter.clone(), format_float(s.value)];
        fields.extend(row(&s.record));
        w.write_record(fields).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

/// Pretty JSON including the resolved configuration of every run.
pub fn to_json<T: Serialize>(records: &T) -> Result<String> {
    serde_json::to_string_pretty(records).map_err(|e| Error::InvalidArgument(format!("writing JSON: {e}")))
}
