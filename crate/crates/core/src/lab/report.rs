use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::discretization::Grid;
use crate::geometry::ChartSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violation,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Violation => "violation",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Structured result of one experiment: a table of records plus a verdict.
///
/// A `Violation` verdict always comes with at least one entry in `replay`
/// holding the offending case's full inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub inputs: Value,
    /// SHA-256 of the canonical JSON of `inputs`.
    pub inputs_digest: String,
    pub verdict: Verdict,
    pub tolerances: BTreeMap<String, f64>,
    pub summary: BTreeMap<String, Value>,
    pub columns: Vec<String>,
    pub records: Vec<Vec<Value>>,
    pub replay: Vec<Value>,
}

impl ExperimentReport {
    pub fn new(kind: &str, inputs: Value) -> Self {
        ExperimentReport {
            id: kind.to_string(),
            kind: kind.to_string(),
            seed: None,
            inputs_digest: digest(&inputs),
            inputs,
            verdict: Verdict::Inconclusive,
            tolerances: BTreeMap::new(),
            summary: BTreeMap::new(),
            columns: Vec::new(),
            records: Vec::new(),
            replay: Vec::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn columns(&mut self, names: &[&str]) {
        self.columns = names.iter().map(|s| s.to_string()).collect();
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.records.push(row);
    }

    pub fn tolerance(&mut self, name: &str, value: f64) {
        self.tolerances.insert(name.to_string(), value);
    }

    pub fn note(&mut self, name: &str, value: impl Into<Value>) {
        self.summary.insert(name.to_string(), value.into());
    }

    /// Column `name` of every record, as numbers (non-numbers become NaN).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(
            self.records
                .iter()
                .map(|r| r[k].as_f64().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn summary_f64(&self, name: &str) -> Option<f64> {
        self.summary.get(name).and_then(Value::as_f64)
    }

    /// Writes `columns` and `records` as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.records {
            w.write_record(r.iter().map(cell))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Hex SHA-256 of the compact JSON encoding (object keys are sorted).
pub fn digest(v: &Value) -> String {
    let bytes = serde_json::to_vec(v).expect("JSON values always serialize");
    format!("{:x}", Sha256::digest(&bytes))
}

/// JSON number, or null for non-finite values.
pub(crate) fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub(crate) fn chart_json(chart: &ChartSpec) -> Value {
    json!({
        "name": chart.name,
        "ranges": chart.ranges,
        "periodic": chart.periodic,
        "metric": chart.metric.name(),
        "metric_params": chart.metric.params(),
    })
}

pub(crate) fn grid_json(grid: &Grid) -> Value {
    json!({
        "chart": chart_json(grid.chart()),
        "counts": grid.counts(),
        "boundary": format!("{:?}", grid.boundary()).to_lowercase(),
    })
}

/// Least-squares slope of `ln e` against `ln h`; `None` when fewer than two
/// points are positive and finite.
pub fn fitted_order(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 || pts.len() < h.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
