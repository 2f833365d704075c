//! Report serialisation and tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::harness::{CellReport, MetricsReport, Stat};

/// Pretty JSON of the full report, including timing.
pub fn to_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// JSON with the `timing` field removed; identical across reruns of a plan.
pub fn to_deterministic_json(report: &MetricsReport) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    serde_json::to_string_pretty(&v).expect("value serializes")
}

pub fn from_json(text: &str) -> Result<MetricsReport> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("report json: {e}")))
}

fn stat(s: Option<Stat>) -> String {
    match s {
        Some(s) => format!("{:.3} ± {:.3}", s.mean, s.std),
        None => "n/a".to_string(),
    }
}

fn row(c: &CellReport) -> [String; 6] {
    [
        c.setup.to_string(),
        c.detector.to_string(),
        c.encoder.to_string(),
        stat(c.auc),
        stat(c.accuracy),
        stat(c.f1),
    ]
}

const HEADER: [&str; 6] = ["Setup", "Model", "Encoding", "AUC", "Accuracy", "F1"];

fn failures(report: &MetricsReport, out: &mut String) {
    for c in report.cells.iter().filter(|c| !c.errors.is_empty()) {
        for e in &c.errors {
            let _ = writeln!(out, "error: {} / {} / {}: {e}", c.setup, c.detector, c.encoder);
        }
    }
}

/// Fixed-width table, one line per grid cell.
pub fn render_text(report: &MetricsReport) -> String {
    let rows: Vec<[String; 6]> = report.cells.iter().map(row).collect();
    let mut widths = HEADER.map(|h| h.chars().count());
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&HEADER.map(String::from)));
    let _ = writeln!(out, "{}", line(&widths.map(|w| "-".repeat(w))));
    for r in &rows {
        let _ = writeln!(out, "{}", line(r));
    }
    failures(report, &mut out);
    out
}

pub fn render_markdown(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", HEADER.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
    for c in &report.cells {
        let _ = writeln!(out, "| {} |", row(c).join(" | "));
    }
    failures(report, &mut out);
    out
}
