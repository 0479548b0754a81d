//! Trace files: CSV (`k,objective,primal_residual,iterate_change,wall_ms`)
//! or a JSON document with the same fields.
//!
//! Values are written with 17 significant digits and read back exactly. An
//! infinite objective is written as `inf` in CSV and `null` in JSON.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::io::{check_version, to_exact_json, FORMAT_VERSION};
use crate::problem::ObjectiveValue;
use crate::solvers::{SolveReport, TraceRecord};

pub const CSV_HEADER: &str = "k,objective,primal_residual,iterate_change,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl TraceFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(format!("unknown trace format \"{other}\" (valid: csv, json)")),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(80 * (trace.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in trace {
        let obj = match r.objective {
            ObjectiveValue::Finite(v) => num(v),
            ObjectiveValue::Infinite => "inf".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k,
            obj,
            num(r.primal_residual_norm),
            num(r.iterate_change),
            num(r.wall_ms)
        ));
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRecord>, FormatError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(FormatError::Parse(format!(
                "expected header \"{CSV_HEADER}\", found {other:?}"
            )))
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| FormatError::Parse(format!("line {}: {what}", i + 2));
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != 5 {
                return Err(bad(&format!("expected 5 fields, found {}", fields.len())));
            }
            let float = |s: &str, name: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad {name} \"{s}\"")));
            Ok(TraceRecord {
                k: fields[0].parse().map_err(|_| bad(&format!("bad k \"{}\"", fields[0])))?,
                objective: match fields[1] {
                    "inf" => ObjectiveValue::Infinite,
                    s => ObjectiveValue::Finite(float(s, "objective")?),
                },
                primal_residual_norm: float(fields[2], "primal_residual")?,
                iterate_change: float(fields[3], "iterate_change")?,
                wall_ms: float(fields[4], "wall_ms")?,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TraceDoc {
    format_version: u32,
    k: Vec<usize>,
    objective: Vec<Option<f64>>,
    primal_residual: Vec<f64>,
    iterate_change: Vec<f64>,
    wall_ms: Vec<f64>,
}

pub fn trace_to_json(trace: &[TraceRecord]) -> String {
    let doc = TraceDoc {
        format_version: FORMAT_VERSION,
        k: trace.iter().map(|r| r.k).collect(),
        objective: trace.iter().map(|r| r.objective.finite()).collect(),
        primal_residual: trace.iter().map(|r| r.primal_residual_norm).collect(),
        iterate_change: trace.iter().map(|r| r.iterate_change).collect(),
        wall_ms: trace.iter().map(|r| r.wall_ms).collect(),
    };
    to_exact_json(&doc)
}

pub fn trace_from_json(text: &str) -> Result<Vec<TraceRecord>, FormatError> {
    let doc: TraceDoc = serde_json::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    check_version(doc.format_version)?;
    let n = doc.k.len();
    if [doc.objective.len(), doc.primal_residual.len(), doc.iterate_change.len(), doc.wall_ms.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(FormatError::Parse("trace columns have different lengths".into()));
    }
    Ok((0..n)
        .map(|i| TraceRecord {
            k: doc.k[i],
            objective: doc.objective[i].map_or(ObjectiveValue::Infinite, ObjectiveValue::Finite),
            primal_residual_norm: doc.primal_residual[i],
            iterate_change: doc.iterate_change[i],
            wall_ms: doc.wall_ms[i],
        })
        .collect())
}

pub fn render_trace(trace: &[TraceRecord], format: TraceFormat) -> String {
    match format {
        TraceFormat::Csv => trace_to_csv(trace),
        TraceFormat::Json => trace_to_json(trace),
    }
}

/// Writes the trace of `report` to `path`.
pub fn emit_traces(report: &SolveReport, format: TraceFormat, path: &Path) -> Result<(), FormatError> {
    fs::write(path, render_trace(&report.trace, format)).map_err(|e| FormatError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    if text.trim_start().starts_with('{') {
        trace_from_json(&text)
    } else {
        trace_from_csv(&text)
    }
}
