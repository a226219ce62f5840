//! The `metrics.csv` artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fedselect::training::MetricRecord;

use crate::error::CliError;

pub const HEADER: [&str; 10] = [
    "trial",
    "round",
    "phase",
    "metric",
    "value",
    "scalars_down",
    "scalars_up",
    "psi_evals",
    "wasted_slices",
    "rel_model_size",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub trial: usize,
    pub round: usize,
    pub phase: String,
    pub metric: String,
    pub value: f64,
    pub scalars_down: usize,
    pub scalars_up: usize,
    pub psi_evals: usize,
    pub wasted_slices: usize,
    pub rel_model_size: f64,
}

impl From<&MetricRecord> for MetricsRow {
    fn from(r: &MetricRecord) -> Self {
        MetricsRow {
            trial: r.trial,
            round: r.round,
            phase: r.phase.as_str().to_string(),
            metric: r.metric.clone(),
            value: r.value,
            scalars_down: r.scalars_down,
            scalars_up: r.scalars_up,
            psi_evals: r.psi_evals,
            wasted_slices: r.wasted_slices,
            rel_model_size: r.rel_model_size,
        }
    }
}

impl MetricsRow {
    fn sort_key(&self) -> (usize, usize, &str, &str) {
        (self.trial, self.round, &self.phase, &self.metric)
    }
}

/// Seventeen significant digits, enough to reproduce any `f64` exactly.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Writes the header and `rows` sorted by (trial, round, phase, metric),
/// replacing any existing file.
pub fn emit_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let io = |e: &dyn std::fmt::Display| CliError::Io(format!("{}: {e}", path.display()));
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    w.write_record(HEADER).map_err(|e| io(&e))?;
    for r in &sorted {
        w.write_record([
            r.trial.to_string(),
            r.round.to_string(),
            r.phase.clone(),
            r.metric.clone(),
            float(r.value),
            r.scalars_down.to_string(),
            r.scalars_up.to_string(),
            r.psi_evals.to_string(),
            r.wasted_slices.to_string(),
            float(r.rel_model_size),
        ])
        .map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let io = |e: &dyn std::fmt::Display| CliError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| io(&e))?;
    r.deserialize().map(|row| row.map_err(|e| io(&e))).collect()
}
