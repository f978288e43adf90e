//! Report files.
//!
//! The CSV holds one row per population size with a fixed column order and
//! every float written as `{:.16e}` (17 significant digits). Missing values,
//! such as the deviation gain at sizes where no probe ran, are empty cells.
//! The JSON form carries the full report and parses back to an identical value.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentReport, ReportRow};

pub const CSV_COLUMNS: [&str; 12] = [
    "n",
    "mse",
    "mse_stderr",
    "budget_mean",
    "budget_stderr",
    "ir_violation_fraction",
    "deviation_gain",
    "deviation_gain_stderr",
    "eta_bound",
    "accuracy_bound",
    "budget_bound",
    "epsilon_total",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn csv_row(row: &ReportRow) -> String {
    [
        row.n.to_string(),
        cell(row.mse),
        cell(row.mse_stderr),
        cell(row.budget_mean),
        cell(row.budget_stderr),
        cell(row.ir_violation_fraction),
        cell(row.deviation_gain),
        cell(row.deviation_gain_stderr),
        float(row.eta_bound),
        float(row.accuracy_bound),
        float(row.budget_bound),
        float(row.epsilon_total),
    ]
    .join(",")
}

pub fn to_csv(report: &ExperimentReport) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for row in &report.rows {
        let _ = writeln!(out, "{}", csv_row(row));
    }
    out
}

pub fn to_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports contain only finite floats and string keys");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> serde_json::Result<ExperimentReport> {
    serde_json::from_str(text)
}

pub fn render(report: &ExperimentReport, format: Format) -> String {
    match format {
        Format::Csv => to_csv(report),
        Format::Json => to_json(report),
    }
}

pub fn emit_report(report: &ExperimentReport, format: Format, path: &Path) -> io::Result<()> {
    std::fs::write(path, render(report, format))
}
