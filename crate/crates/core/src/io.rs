//! CSV ingestion and machine-readable output.
//!
//! Input: a header row, one column named `y`, and numeric feature columns in file
//! order. A column named `is_anomaly` (as written by the generator) is ignored.
//! Floats are written with 17 significant digits; infinite endpoints as the
//! strings `"-inf"` / `"inf"`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::experiments::MetricsTable;
use crate::inference::PValueReport;
use crate::intervals::IntervalSet;
use crate::linreg::{Covariance, Dataset};
use crate::ransac::DetectionResult;

pub const RESPONSE_COLUMN: &str = "y";
pub const TRUTH_COLUMN: &str = "is_anomaly";

/// JSON schema of [`ReportDocument`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Round-trip text form of a float.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// A float serialized as a JSON number with 17 significant digits, or a string for
/// non-finite values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact(pub f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_str(&fmt_f64(self.0))
        }
    }
}

struct Region<'a>(&'a IntervalSet);

impl Serialize for Region<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for iv in self.0.intervals() {
            seq.serialize_element(&[Exact(iv.lo), Exact(iv.hi)])?;
        }
        seq.end()
    }
}

/// The feature names of a parsed file plus its data.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub features: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let y_col = headers
        .iter()
        .position(|h| h == RESPONSE_COLUMN)
        .ok_or_else(|| Error::InvalidInput(format!("input needs a column named '{RESPONSE_COLUMN}'")))?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != y_col && &headers[c] != TRUTH_COLUMN)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidInput("input has no feature columns".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 2; // 1-based, after the header
        if record.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let cell = |c: usize| -> Result<f64> {
            record[c].parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!(
                    "row {row}, column '{}': '{}' is not a number",
                    &headers[c], &record[c]
                ))
            })
        };
        ys.push(cell(y_col)?);
        for &c in &feature_cols {
            xs.push(cell(c)?);
        }
    }
    if ys.is_empty() {
        return Err(Error::InvalidInput("input has no data rows".into()));
    }
    Ok(CsvData {
        features: feature_cols.iter().map(|&c| headers[c].to_string()).collect(),
        x: DMatrix::from_row_slice(ys.len(), feature_cols.len(), &xs),
        y: DVector::from_vec(ys),
    })
}

pub fn read_csv(path: &Path, sigma: Covariance) -> Result<Dataset> {
    let parsed = read_csv_from(std::fs::File::open(path)?)?;
    Dataset::new(parsed.x, parsed.y, sigma)
}

/// Dense covariance, one matrix row per line, comma- or whitespace-separated.
pub fn read_covariance_from<R: Read>(mut reader: R, n: usize) -> Result<DMatrix<f64>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("covariance line {}: '{t}' is not a number", ln + 1))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n} covariance"),
            found: format!(
                "{} rows with lengths {:?}",
                rows.len(),
                rows.iter().map(Vec::len).collect::<std::collections::BTreeSet<_>>()
            ),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn read_covariance(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    read_covariance_from(std::fs::File::open(path)?, n)
}

/// One output record per anomaly and method.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord<'a> {
    pub index: usize,
    pub method: &'a str,
    pub p_value: Exact,
    pub z_obs: Exact,
    pub var: Exact,
    #[serde(serialize_with = "serialize_region")]
    pub region: &'a IntervalSet,
}

fn serialize_region<S: Serializer>(region: &&IntervalSet, s: S) -> std::result::Result<S::Ok, S::Error> {
    Region(region).serialize(s)
}

impl<'a> From<&'a PValueReport> for ReportRecord<'a> {
    fn from(r: &'a PValueReport) -> Self {
        Self {
            index: r.anomaly_index,
            method: r.method.as_str(),
            p_value: Exact(r.p_value),
            z_obs: Exact(r.z_obs),
            var: Exact(r.var),
            region: &r.region,
        }
    }
}

/// Top-level JSON document of a test run.
#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument<'a> {
    pub n: usize,
    pub p: usize,
    pub iterations: usize,
    pub tau: Exact,
    pub seed: u64,
    pub optimal_model: usize,
    pub anomalies: &'a [usize],
    pub reports: Vec<ReportRecord<'a>>,
}

impl<'a> ReportDocument<'a> {
    pub fn new(data: &Dataset, detection: &'a DetectionResult, tau: f64, seed: u64, reports: &'a [PValueReport]) -> Self {
        Self {
            n: data.n(),
            p: data.p(),
            iterations: detection.plan.len(),
            tau: Exact(tau),
            seed,
            optimal_model: detection.optimal,
            anomalies: &detection.anomalies,
            reports: reports.iter().map(ReportRecord::from).collect(),
        }
    }
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn region_text(region: &IntervalSet) -> String {
    region
        .intervals()
        .iter()
        .map(|iv| format!("[{},{}]", fmt_f64(iv.lo), fmt_f64(iv.hi)))
        .collect::<Vec<_>>()
        .join(";")
}

/// `index,method,p_value,z_obs,var,region` with `region` as `[lo,hi];[lo,hi]`.
pub fn write_reports_csv<W: Write>(w: W, reports: &[PValueReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "method", "p_value", "z_obs", "var", "region"])?;
    for r in reports {
        out.write_record([
            r.anomaly_index.to_string(),
            r.method.to_string(),
            fmt_f64(r.p_value),
            fmt_f64(r.z_obs),
            fmt_f64(r.var),
            region_text(&r.region),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Features `x1..xp`, the response `y`, and a 0/1 `is_anomaly` column.
pub fn write_dataset_csv<W: Write>(w: W, data: &Dataset, truth: &[usize]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push(RESPONSE_COLUMN.into());
    header.push(TRUTH_COLUMN.into());
    out.write_record(&header)?;
    let mut is_truth = vec![false; data.n()];
    for &i in truth {
        is_truth[i] = true;
    }
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.x.row(i).iter().map(|&v| fmt_f64(v)).collect();
        rec.push(fmt_f64(data.y[i]));
        rec.push(if is_truth[i] { "1" } else { "0" }.into());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per method and setting.
pub fn write_metrics_csv<W: Write>(w: W, table: &MetricsTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "experiment",
        "method",
        "n",
        "delta",
        "iterations",
        "alpha",
        "trials",
        "tested",
        "rejected",
        "failures",
        "rate",
        "mean_seconds",
    ])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &table.rows {
        out.write_record([
            r.experiment.as_str().to_string(),
            r.method.clone(),
            r.n.to_string(),
            fmt_f64(r.delta),
            r.iterations.to_string(),
            fmt_f64(r.alpha),
            r.trials.to_string(),
            r.tested.to_string(),
            r.rejected.to_string(),
            r.failures.to_string(),
            opt(r.rate),
            opt(r.mean_seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}
