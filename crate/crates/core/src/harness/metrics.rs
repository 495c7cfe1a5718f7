//! Metrics CSV and the per-series projections used for plotting.
//!
//! Both formats start with a `#schema=... config_hash=...` comment line
//! followed by a CSV header row.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_SCHEMA: &str = "ccs.metrics.v1";
pub const SERIES_SCHEMA: &str = "ccs.series.v1";

/// One training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub reward_channel: String,
    pub mode: String,
    pub mean_kl: f64,
    pub avg_num_search: f64,
    /// Held-out gold accuracy; empty on steps without evaluation.
    pub eval_accuracy: Option<f64>,
    /// Seconds since training started, or 0 when not recorded.
    pub wall_time: f64,
}

pub struct MetricsWriter<W: Write> {
    csv: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    /// Writes the schema line and the header row.
    pub fn new(mut out: W, config_hash: &str) -> Result<Self> {
        writeln!(out, "#schema={METRICS_SCHEMA} config_hash={config_hash}")?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        csv.write_record([
            "step",
            "mean_reward",
            "reward_channel",
            "mode",
            "mean_kl",
            "avg_num_search",
            "eval_accuracy",
            "wall_time",
        ])?;
        Ok(Self { csv })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        self.csv.serialize(record)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.csv.flush()?;
        Ok(())
    }
}

fn parse_error(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Splits a `#schema=X config_hash=Y` line.
fn read_schema_line(path: &Path, expected: &str) -> Result<(String, BufReader<File>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let rest = first
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| parse_error(path, 1, "missing schema line"))?;
    let mut schema = None;
    let mut hash = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("schema", v)) => schema = Some(v.to_string()),
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            _ => return Err(parse_error(path, 1, format!("unexpected field {kv:?}"))),
        }
    }
    if schema.as_deref() != Some(expected) {
        return Err(parse_error(path, 1, format!("expected schema {expected}, found {schema:?}")));
    }
    let hash = hash.ok_or_else(|| parse_error(path, 1, "missing config_hash"))?;
    Ok((hash, reader))
}

/// Line number (1-based, counting the schema line) of a CSV error.
fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize + 1)
}

/// Reads a metrics file, returning its config hash and rows.
pub fn read_metrics(path: &Path) -> Result<(String, Vec<MetricsRecord>)> {
    let (hash, reader) = read_schema_line(path, METRICS_SCHEMA)?;
    let mut csv = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in csv.deserialize::<MetricsRecord>() {
        rows.push(row.map_err(|e| parse_error(path, csv_line(&e), e.to_string()))?);
    }
    Ok((hash, rows))
}

/// The two plot series derived from one metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotFiles {
    pub reward: PathBuf,
    pub num_search: PathBuf,
}

/// Projects a metrics CSV onto `reward_series.csv` (step, mean_reward) and
/// `search_series.csv` (step, avg_num_search) in `out_dir`. Values are copied
/// as written, so they match the source column exactly.
pub fn emit_plots(metrics_csv: &Path, out_dir: &Path) -> Result<PlotFiles> {
    let (hash, reader) = read_schema_line(metrics_csv, METRICS_SCHEMA)?;
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| parse_error(metrics_csv, 2, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(metrics_csv, 2, format!("missing column {name}")))
    };
    let (c_step, c_reward, c_search) = (col("step")?, col("mean_reward")?, col("avg_num_search")?);

    let mut reward_rows = Vec::new();
    let mut search_rows = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(|e| parse_error(metrics_csv, csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize + 1);
        let field = |i: usize| rec.get(i).ok_or_else(|| parse_error(metrics_csv, line, "short row"));
        let step = field(c_step)?;
        step.parse::<usize>()
            .map_err(|e| parse_error(metrics_csv, line, format!("step: {e}")))?;
        for (c, rows) in [(c_reward, &mut reward_rows), (c_search, &mut search_rows)] {
            let v = field(c)?;
            v.parse::<f64>()
                .map_err(|e| parse_error(metrics_csv, line, format!("{}: {e}", &headers[c])))?;
            rows.push((step.to_string(), v.to_string()));
        }
    }

    fs::create_dir_all(out_dir)?;
    let files = PlotFiles {
        reward: out_dir.join("reward_series.csv"),
        num_search: out_dir.join("search_series.csv"),
    };
    for (path, name, rows) in [
        (&files.reward, "mean_reward", &reward_rows),
        (&files.num_search, "avg_num_search", &search_rows),
    ] {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "#schema={SERIES_SCHEMA} config_hash={hash}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", name])?;
        for (s, v) in rows {
            w.write_record([s, v])?;
        }
        w.flush()?;
    }
    Ok(files)
}

/// Reads a series file back as `(step, value)` pairs.
pub fn read_series(path: &Path) -> Result<(String, Vec<(usize, f64)>)> {
    let (hash, reader) = read_schema_line(path, SERIES_SCHEMA)?;
    let mut csv = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in csv.deserialize::<(usize, f64)>() {
        rows.push(row.map_err(|e| parse_error(path, csv_line(&e), e.to_string()))?);
    }
    Ok((hash, rows))
}
