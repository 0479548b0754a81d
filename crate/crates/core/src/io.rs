//! JSON interchange for problems and generator ground truth.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "c": [1.0, 0.0],
//!   "blocks": [
//!     {
//!       "objective": {"kind": "quadratic", "Q": [[2.0]], "q": [0.0], "constant": 0.0},
//!       "A": [[1.0], [0.0]],
//!       "local_set": {"kind": "box", "lo": [0.0], "hi": [null]}
//!     }
//!   ]
//! }
//! ```
//!
//! Objective kinds: `zero`, `quadratic` (`Q`, `q`, optional `constant`),
//! `l1` (`beta`, optional `coords`), `indicator` (`set`) and `sum`
//! (`terms`). Local set kinds: `unbounded`, `nonnegative` and `box`, where
//! `null` stands for an infinite bound. Matrices are arrays of rows. Numbers
//! are written with 17 significant digits, so files round-trip exactly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::problem::{assemble_problem, BlockSpec, LocalSet, ProblemSpec};
use crate::prox::ObjectiveHandle;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    format_version: u32,
    c: Vec<f64>,
    blocks: Vec<BlockDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockDoc {
    objective: ObjectiveDoc,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(default = "unbounded")]
    local_set: SetDoc,
}

fn unbounded() -> SetDoc {
    SetDoc::Unbounded
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ObjectiveDoc {
    Zero,
    Quadratic {
        #[serde(rename = "Q")]
        q_mat: Vec<Vec<f64>>,
        q: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
    L1 {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
    },
    Indicator { set: SetDoc },
    Sum { terms: Vec<ObjectiveDoc> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SetDoc {
    Unbounded,
    Nonnegative,
    Box { lo: Vec<Option<f64>>, hi: Vec<Option<f64>> },
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, FormatError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(FormatError::Parse(format!(
            "{what}: row {bad} has {} entries, row 0 has {ncols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn set_to_doc(s: &LocalSet) -> SetDoc {
    let finite = |v: &DVector<f64>| v.iter().map(|x| x.is_finite().then_some(*x)).collect();
    match s {
        LocalSet::Unbounded => SetDoc::Unbounded,
        LocalSet::Nonnegative => SetDoc::Nonnegative,
        LocalSet::Box { lo, hi } => SetDoc::Box {
            lo: finite(lo),
            hi: finite(hi),
        },
    }
}

fn set_from_doc(d: SetDoc) -> LocalSet {
    match d {
        SetDoc::Unbounded => LocalSet::Unbounded,
        SetDoc::Nonnegative => LocalSet::Nonnegative,
        SetDoc::Box { lo, hi } => LocalSet::boxed(
            lo.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect(),
            hi.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect(),
        ),
    }
}

fn objective_to_doc(h: &ObjectiveHandle) -> ObjectiveDoc {
    match h {
        ObjectiveHandle::Zero => ObjectiveDoc::Zero,
        ObjectiveHandle::Quadratic { q_mat, q_vec, constant } => ObjectiveDoc::Quadratic {
            q_mat: rows_of(q_mat),
            q: q_vec.iter().copied().collect(),
            constant: *constant,
        },
        ObjectiveHandle::L1 { beta, coords } => ObjectiveDoc::L1 {
            beta: *beta,
            coords: coords.clone(),
        },
        ObjectiveHandle::Indicator(s) => ObjectiveDoc::Indicator { set: set_to_doc(s) },
        ObjectiveHandle::Sum(terms) => ObjectiveDoc::Sum {
            terms: terms.iter().map(objective_to_doc).collect(),
        },
    }
}

fn objective_from_doc(d: ObjectiveDoc) -> Result<ObjectiveHandle, FormatError> {
    Ok(match d {
        ObjectiveDoc::Zero => ObjectiveHandle::Zero,
        ObjectiveDoc::Quadratic { q_mat, q, constant } => ObjectiveHandle::Quadratic {
            q_mat: matrix_from_rows(&q_mat, "Q")?,
            q_vec: DVector::from_vec(q),
            constant,
        },
        ObjectiveDoc::L1 { beta, coords } => ObjectiveHandle::L1 { beta, coords },
        ObjectiveDoc::Indicator { set } => ObjectiveHandle::Indicator(set_from_doc(set)),
        ObjectiveDoc::Sum { terms } => {
            ObjectiveHandle::Sum(terms.into_iter().map(objective_from_doc).collect::<Result<_, _>>()?)
        }
    })
}

/// Serializer formatter printing every float with 17 significant digits.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Pretty-enough JSON with exact floats: one top-level value, compact inside.
pub(crate) fn to_exact_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats);
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

pub fn problem_to_json(problem: &ProblemSpec) -> String {
    let doc = ProblemDoc {
        format_version: FORMAT_VERSION,
        c: problem.rhs().iter().copied().collect(),
        blocks: problem
            .blocks()
            .iter()
            .map(|b| BlockDoc {
                objective: objective_to_doc(&b.objective),
                a: rows_of(&b.coupling),
                local_set: set_to_doc(&b.local_set),
            })
            .collect(),
    };
    to_exact_json(&doc)
}

pub(crate) fn check_version(found: u32) -> Result<(), FormatError> {
    if found != FORMAT_VERSION {
        return Err(FormatError::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn problem_from_json(text: &str) -> Result<ProblemSpec, FormatError> {
    let doc: ProblemDoc = serde_json::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    check_version(doc.format_version)?;
    let blocks = doc
        .blocks
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let a = matrix_from_rows(&b.a, &format!("block {} A", i + 1))?;
            Ok(BlockSpec::new(objective_from_doc(b.objective)?, a, set_from_doc(b.local_set)))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(assemble_problem(blocks, DVector::from_vec(doc.c))?)
}

pub fn write_problem(problem: &ProblemSpec, path: &Path) -> Result<(), FormatError> {
    fs::write(path, problem_to_json(problem)).map_err(|e| FormatError::io(path, e))
}

pub fn read_problem(path: &Path) -> Result<ProblemSpec, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    problem_from_json(&text)
}

/// Known answers stored next to a generated instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    pub generator: String,
    pub seed: u64,
    /// True per-block states (state estimation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_states: Option<Vec<Vec<f64>>>,
    /// Attacked measurement indices per area (state estimation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_support: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_objective: Option<f64>,
}

pub fn ground_truth_to_json(truth: &GroundTruth) -> String {
    to_exact_json(truth)
}

pub fn ground_truth_from_json(text: &str) -> Result<GroundTruth, FormatError> {
    let truth: GroundTruth = serde_json::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    check_version(truth.format_version)?;
    Ok(truth)
}

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<(), FormatError> {
    fs::write(path, ground_truth_to_json(truth)).map_err(|e| FormatError::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    ground_truth_from_json(&text)
}
