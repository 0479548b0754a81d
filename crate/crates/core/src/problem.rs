//! Canonical block-separable problem, its augmented Lagrangian and the
//! per-iteration diagnostics shared by every scheme.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::ProblemError;
use crate::prox::{BlockModel, ObjectiveHandle};

/// Simple local constraint set `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalSet {
    Unbounded,
    /// Per-coordinate bounds; infinite entries leave that side open.
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    Nonnegative,
}

impl LocalSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        LocalSet::Box {
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        }
    }

    /// Lower and upper bound vectors for a block of dimension `n`.
    pub fn bounds(&self, n: usize) -> Result<(DVector<f64>, DVector<f64>), String> {
        match self {
            LocalSet::Unbounded => Ok((
                DVector::from_element(n, f64::NEG_INFINITY),
                DVector::from_element(n, f64::INFINITY),
            )),
            LocalSet::Nonnegative => Ok((DVector::zeros(n), DVector::from_element(n, f64::INFINITY))),
            LocalSet::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(format!(
                        "box has {}/{} bounds for a block of dimension {n}",
                        lo.len(),
                        hi.len()
                    ));
                }
                for j in 0..n {
                    if lo[j].is_nan() || hi[j].is_nan() {
                        return Err(format!("NaN bound at coordinate {j}"));
                    }
                    if lo[j] > hi[j] {
                        return Err(format!("lo[{j}] = {} > hi[{j}] = {}", lo[j], hi[j]));
                    }
                }
                Ok((lo.clone(), hi.clone()))
            }
        }
    }
}

/// One variable block: objective `f_i`, coupling matrix `A_i` (m × n_i) and
/// local set `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub objective: ObjectiveHandle,
    pub coupling: DMatrix<f64>,
    pub local_set: LocalSet,
}

impl BlockSpec {
    pub fn new(objective: ObjectiveHandle, coupling: DMatrix<f64>, local_set: LocalSet) -> Self {
        Self {
            objective,
            coupling,
            local_set,
        }
    }

    pub fn dim(&self) -> usize {
        self.coupling.ncols()
    }
}

/// A validated instance of the canonical problem. Immutable once assembled.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    blocks: Vec<BlockSpec>,
    rhs: DVector<f64>,
    models: Vec<BlockModel>,
}

/// Validates dimensions and local sets and returns the assembled problem.
pub fn assemble_problem(blocks: Vec<BlockSpec>, rhs: DVector<f64>) -> Result<ProblemSpec, ProblemError> {
    if blocks.is_empty() {
        return Err(ProblemError::EmptyBlocks);
    }
    let m = rhs.len();
    let mut models = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let id = i + 1;
        if block.coupling.nrows() != m {
            return Err(ProblemError::DimensionMismatch {
                block: id,
                detail: format!(
                    "coupling matrix has {} rows, right-hand side has length {m}",
                    block.coupling.nrows()
                ),
            });
        }
        let n = block.coupling.ncols();
        if n == 0 {
            return Err(ProblemError::DimensionMismatch {
                block: id,
                detail: "block has no variables".into(),
            });
        }
        let (lo, hi) = block
            .local_set
            .bounds(n)
            .map_err(|detail| ProblemError::InvalidLocalSet { block: id, detail })?;
        let model = BlockModel::build(&block.objective, lo, hi)
            .map_err(|detail| ProblemError::InvalidObjective { block: id, detail })?;
        models.push(model);
    }
    Ok(ProblemSpec { blocks, rhs, models })
}

impl ProblemSpec {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of coupling rows `m`.
    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &BlockSpec {
        &self.blocks[i]
    }

    pub fn coupling(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i].coupling
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(BlockSpec::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(BlockSpec::dim).sum()
    }

    /// Objective and local set of block `i` merged into one canonical model.
    pub fn model(&self, i: usize) -> &BlockModel {
        &self.models[i]
    }

    pub fn check_conforming(&self, x: &[DVector<f64>]) -> Result<(), ProblemError> {
        if x.len() != self.num_blocks() {
            return Err(ProblemError::NonConformingState(format!(
                "{} block vectors for {} blocks",
                x.len(),
                self.num_blocks()
            )));
        }
        for (i, (xi, b)) in x.iter().zip(&self.blocks).enumerate() {
            if xi.len() != b.dim() {
                return Err(ProblemError::DimensionMismatch {
                    block: i + 1,
                    detail: format!("iterate has length {}, block has {}", xi.len(), b.dim()),
                });
            }
        }
        Ok(())
    }

    /// `Σ A_i x_i − c`, accumulated left to right over blocks.
    pub fn residual(&self, x: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(self.rows());
        for (b, xi) in self.blocks.iter().zip(x) {
            acc += &b.coupling * xi;
        }
        acc -= &self.rhs;
        acc
    }
}

/// Objective value with an explicit infinite state for indicator violations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveValue {
    Finite(f64),
    Infinite,
}

impl ObjectiveValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, ObjectiveValue::Finite(v) if v.is_finite())
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ObjectiveValue::Finite(v) => Some(v),
            ObjectiveValue::Infinite => None,
        }
    }

    /// Plain float, `+∞` for the infinite state.
    pub fn as_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn plus(self, other: ObjectiveValue) -> ObjectiveValue {
        match (self, other) {
            (ObjectiveValue::Finite(a), ObjectiveValue::Finite(b)) => ObjectiveValue::Finite(a + b),
            _ => ObjectiveValue::Infinite,
        }
    }
}

/// `Σ_i f_i(x_i)`, infinite when some `x_i` leaves its local set.
pub fn eval_objective(problem: &ProblemSpec, x: &[DVector<f64>]) -> Result<ObjectiveValue, ProblemError> {
    problem.check_conforming(x)?;
    let mut total = ObjectiveValue::Finite(0.0);
    for (model, xi) in problem.models.iter().zip(x) {
        total = total.plus(model.value(xi));
    }
    Ok(total)
}

/// `Σ f_i(x_i) − λᵀ(Σ A_i x_i − c) + (ρ/2)‖Σ A_i x_i − c‖²`.
pub fn eval_augmented_lagrangian(
    problem: &ProblemSpec,
    state: &IterateState,
    rho: f64,
) -> Result<ObjectiveValue, ProblemError> {
    if !(rho > 0.0) {
        return Err(ProblemError::NonPositiveRho(rho));
    }
    state.check(problem)?;
    let objective = eval_objective(problem, &state.x)?;
    let r = problem.residual(&state.x);
    let coupling = -state.lambda.dot(&r) + 0.5 * rho * r.norm_squared();
    Ok(objective.plus(ObjectiveValue::Finite(coupling)))
}

/// Iterate of any scheme.
///
/// `z` and `lambda_blocks` are only populated by variable splitting, which
/// keeps one multiplier per block; `lambda` then holds their average.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<DVector<f64>>,
    pub lambda: DVector<f64>,
    pub z: Option<Vec<DVector<f64>>>,
    pub lambda_blocks: Option<Vec<DVector<f64>>>,
    pub k: usize,
}

impl IterateState {
    /// All-zero blocks and multiplier.
    pub fn zeros(problem: &ProblemSpec) -> Self {
        Self {
            x: problem.block_dims().into_iter().map(DVector::zeros).collect(),
            lambda: DVector::zeros(problem.rows()),
            z: None,
            lambda_blocks: None,
            k: 0,
        }
    }

    pub fn with_blocks(problem: &ProblemSpec, x: Vec<DVector<f64>>) -> Result<Self, ProblemError> {
        problem.check_conforming(&x)?;
        Ok(Self {
            x,
            ..Self::zeros(problem)
        })
    }

    pub fn check(&self, problem: &ProblemSpec) -> Result<(), ProblemError> {
        problem.check_conforming(&self.x)?;
        let m = problem.rows();
        if self.lambda.len() != m {
            return Err(ProblemError::NonConformingState(format!(
                "multiplier has length {}, expected {m}",
                self.lambda.len()
            )));
        }
        for (name, group) in [("z", &self.z), ("lambda_blocks", &self.lambda_blocks)] {
            if let Some(vs) = group {
                if vs.len() != problem.num_blocks() || vs.iter().any(|v| v.len() != m) {
                    return Err(ProblemError::NonConformingState(format!(
                        "{name} must hold {} vectors of length {m}",
                        problem.num_blocks()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-iteration measurements reported in traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub objective: ObjectiveValue,
    /// `‖Σ A_i x_i − c‖₂`.
    pub primal_residual_norm: f64,
    /// `max_i ‖x_i^curr − x_i^prev‖₂`.
    pub iterate_change: f64,
    pub wall_ms: f64,
}

pub fn compute_diagnostics(
    problem: &ProblemSpec,
    prev: &IterateState,
    curr: &IterateState,
    t0: Instant,
) -> Result<Diagnostics, ProblemError> {
    problem.check_conforming(&prev.x)?;
    problem.check_conforming(&curr.x)?;
    Ok(diagnostics_for(problem, &prev.x, &curr.x, t0))
}

pub(crate) fn diagnostics_for(
    problem: &ProblemSpec,
    prev: &[DVector<f64>],
    curr: &[DVector<f64>],
    t0: Instant,
) -> Diagnostics {
    let objective = problem
        .models
        .iter()
        .zip(curr)
        .fold(ObjectiveValue::Finite(0.0), |acc, (m, xi)| acc.plus(m.value(xi)));
    let primal_residual_norm = problem.residual(curr).norm();
    let iterate_change = prev
        .iter()
        .zip(curr)
        .map(|(a, b)| (b - a).norm())
        .fold(0.0, f64::max);
    Diagnostics {
        objective,
        primal_residual_norm,
        iterate_change,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    }
}
