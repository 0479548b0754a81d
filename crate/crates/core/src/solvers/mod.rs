//! The six iteration schemes behind one entry point.
//!
//! Every scheme is driven by the same loop: one scheme step, diagnostics on
//! the reported primal point, a trace record, then the shared stopping rule
//! ([`stopping::stopping_and_divergence_check`]). The trace starts with a
//! `k = 0` record for the initial point.

mod gbs;
mod jacobi;
mod kernel;
mod splitting;
pub mod stopping;
mod sweep;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{ProxError, SolveError};
use crate::problem::{diagnostics_for, IterateState, ObjectiveValue, ProblemSpec};

pub use gbs::GbsOperators;
pub use stopping::{stopping_and_divergence_check, Decision, StopScale};

use kernel::Workers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    TwoBlock,
    GaussSeidel,
    Jacobi,
    VariableSplitting,
    Gbs,
    ProxJacobi,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::TwoBlock,
        Scheme::GaussSeidel,
        Scheme::Jacobi,
        Scheme::VariableSplitting,
        Scheme::Gbs,
        Scheme::ProxJacobi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::TwoBlock => "two_block",
            Scheme::GaussSeidel => "gauss_seidel",
            Scheme::Jacobi => "jacobi",
            Scheme::VariableSplitting => "variable_splitting",
            Scheme::Gbs => "gbs",
            Scheme::ProxJacobi => "prox_jacobi",
        }
    }

    /// Schemes whose block updates run concurrently.
    pub fn is_jacobi_family(&self) -> bool {
        matches!(self, Scheme::Jacobi | Scheme::ProxJacobi | Scheme::VariableSplitting)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownScheme(pub String);

impl fmt::Display for UnknownScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let valid: Vec<_> = Scheme::ALL.iter().map(Scheme::name).collect();
        write!(f, "unknown scheme \"{}\" (valid: {})", self.0, valid.join(", "))
    }
}

impl std::error::Error for UnknownScheme {}

impl FromStr for Scheme {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// Rule producing the proximal matrices `P_i` of proximal Jacobian ADMM.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxPolicy {
    /// `P_i = 0`.
    Zero,
    /// `P_i = τ_i I − ρ A_iᵀA_i` with `τ_i = factor · ρ · N · σ_max(A_i)²`.
    /// The block curvature becomes `τ_i I`, so updates are closed-form for
    /// separable objectives.
    Linearized { factor: f64 },
    /// Explicit symmetric PSD matrices, one per block.
    Custom(Vec<DMatrix<f64>>),
}

impl Default for ProxPolicy {
    fn default() -> Self {
        ProxPolicy::Linearized { factor: 1.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub rho: f64,
    /// Correction step of Gaussian back substitution, in (0, 1).
    pub alpha: f64,
    /// Multiplier damping of proximal Jacobian ADMM, > 0.
    pub gamma: f64,
    pub prox_policy: ProxPolicy,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub parallel_workers: usize,
}

impl SolverConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            rho: 1.0,
            alpha: 0.9,
            gamma: 1.0,
            prox_policy: ProxPolicy::default(),
            eps_abs: 1e-8,
            eps_rel: 1e-6,
            max_iter: 100_000,
            parallel_workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: String| Err(SolveError::Config(msg));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.scheme == Scheme::Gbs && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0,1) for gbs, got {}", self.alpha));
        }
        if self.scheme == Scheme::ProxJacobi && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive for prox_jacobi, got {}", self.gamma));
        }
        if let ProxPolicy::Linearized { factor } = self.prox_policy {
            if !(factor > 0.0 && factor.is_finite()) {
                return bad(format!("linearized prox factor must be positive, got {factor}"));
            }
        }
        if !(self.eps_abs > 0.0) || !(self.eps_rel > 0.0) {
            return bad(format!(
                "tolerances must be positive, got eps_abs = {}, eps_rel = {}",
                self.eps_abs, self.eps_rel
            ));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if self.parallel_workers == 0 {
            return bad("parallel_workers must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
    IllPosed,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Diverged => "diverged",
            SolveStatus::IllPosed => "ill_posed",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub objective: ObjectiveValue,
    pub primal_residual_norm: f64,
    pub iterate_change: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub status: SolveStatus,
    pub final_state: IterateState,
    /// Primal point the trace describes. Equal to `final_state.x` except for
    /// gbs, where it is the last prediction (block minimizers, always inside
    /// the local sets) while `final_state` holds the corrected iterate.
    pub primal: Vec<DVector<f64>>,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    /// Detail for `IllPosed`.
    pub message: Option<String>,
}

impl SolveReport {
    pub fn final_record(&self) -> &TraceRecord {
        self.trace.last().expect("trace always holds the initial record")
    }
}

/// Scheme-specific data exposed to iteration observers.
#[derive(Debug, Clone)]
pub enum StepExtra {
    None,
    /// Per-block residuals `A_i x_i + z_i − c/N` used in the per-block
    /// multiplier updates.
    Splitting { block_residuals: Vec<DVector<f64>> },
    /// Prediction `(x̃, λ̃)` that the correction step consumed.
    Gbs {
        predicted_x: Vec<DVector<f64>>,
        predicted_lambda: DVector<f64>,
    },
}

/// Everything an observer sees after one iteration.
pub struct IterationEvent<'a> {
    pub k: usize,
    pub prev: &'a IterateState,
    pub curr: &'a IterateState,
    /// The residual vector the multiplier update used.
    pub residual: &'a DVector<f64>,
    /// Scalar multiplying `residual` in the multiplier update (`ρ` or `γρ`).
    pub multiplier_step: f64,
    pub extra: &'a StepExtra,
    pub record: &'a TraceRecord,
}

pub(crate) struct StepOutcome {
    pub residual: DVector<f64>,
    pub multiplier_step: f64,
    pub extra: StepExtra,
}

pub(crate) trait Engine {
    fn state(&self) -> &IterateState;
    fn state_mut(&mut self) -> &mut IterateState;
    fn primal(&self) -> &[DVector<f64>];
    fn step(&mut self, workers: &Workers) -> Result<StepOutcome, ProxError>;
}

pub type Observer<'o> = &'o mut dyn FnMut(&IterationEvent<'_>);

/// Solves with the scheme named in `config`, starting from `x0` (all zeros
/// when `None`).
pub fn solve(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve_observed(problem, config, x0, None)
}

/// [`solve`] with a callback invoked after every iteration.
pub fn solve_observed(
    problem: &ProblemSpec,
    config: &SolverConfig,
    x0: Option<IterateState>,
    observer: Option<Observer<'_>>,
) -> Result<SolveReport, SolveError> {
    config.validate()?;
    let x0 = match x0 {
        Some(s) => {
            s.check(problem)?;
            s
        }
        None => IterateState::zeros(problem),
    };
    let n = problem.num_blocks();
    match config.scheme {
        Scheme::TwoBlock => {
            if n != 2 {
                return Err(SolveError::WrongScheme {
                    scheme: "two_block",
                    expected: "exactly 2",
                    actual: n,
                });
            }
            drive(problem, config, sweep::SweepEngine::new(problem, config, x0)?, observer)
        }
        Scheme::GaussSeidel => {
            require_at_least(config.scheme, 2, n)?;
            drive(problem, config, sweep::SweepEngine::new(problem, config, x0)?, observer)
        }
        Scheme::Jacobi => {
            require_at_least(config.scheme, 2, n)?;
            drive(problem, config, jacobi::JacobiEngine::plain(problem, config, x0)?, observer)
        }
        Scheme::ProxJacobi => drive(problem, config, jacobi::JacobiEngine::proximal(problem, config, x0)?, observer),
        Scheme::VariableSplitting => drive(problem, config, splitting::SplittingEngine::new(problem, config, x0)?, observer),
        Scheme::Gbs => {
            require_at_least(config.scheme, 2, n)?;
            drive(problem, config, gbs::GbsEngine::new(problem, config, x0)?, observer)
        }
    }
}

fn require_at_least(scheme: Scheme, min: usize, n: usize) -> Result<(), SolveError> {
    if n < min {
        return Err(SolveError::WrongScheme {
            scheme: scheme.name(),
            expected: "at least 2",
            actual: n,
        });
    }
    Ok(())
}

fn with_scheme(scheme: Scheme, config: &SolverConfig) -> SolverConfig {
    SolverConfig {
        scheme,
        ..config.clone()
    }
}

/// Two-block ADMM: `x_1`-minimization, `x_2`-minimization with the fresh
/// `x_1`, then `λ ← λ − ρ(A_1x_1 + A_2x_2 − c)`.
pub fn solve_two_block(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve(problem, &with_scheme(Scheme::TwoBlock, config), x0)
}

/// Direct Gauss-Seidel extension: sequential sweep over all blocks, then one
/// multiplier update. Not convergent in general.
pub fn solve_gauss_seidel(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve(problem, &with_scheme(Scheme::GaussSeidel, config), x0)
}

/// Direct Jacobi extension: all blocks from the same snapshot, concurrently.
/// Not convergent in general, even for two blocks.
pub fn solve_jacobi(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve(problem, &with_scheme(Scheme::Jacobi, config), x0)
}

/// Variable splitting: `A_i x_i + z_i = c/N` with `Σ z_i = 0`.
pub fn solve_variable_splitting(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve(problem, &with_scheme(Scheme::VariableSplitting, config), x0)
}

/// Gauss-Seidel prediction followed by a Gaussian back substitution
/// correction.
pub fn solve_gbs(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve(problem, &with_scheme(Scheme::Gbs, config), x0)
}

/// Jacobi updates with a proximal term and a damped multiplier step.
pub fn solve_prox_jacobi(problem: &ProblemSpec, config: &SolverConfig, x0: Option<IterateState>) -> Result<SolveReport, SolveError> {
    solve(problem, &with_scheme(Scheme::ProxJacobi, config), x0)
}

fn record(k: usize, d: crate::problem::Diagnostics) -> TraceRecord {
    TraceRecord {
        k,
        objective: d.objective,
        primal_residual_norm: d.primal_residual_norm,
        iterate_change: d.iterate_change,
        wall_ms: d.wall_ms,
    }
}

/// Whether the initial point is already a fixed point of the block updates.
/// Only consulted when the initial residual passes the tolerance.
fn initial_point_is_stationary(problem: &ProblemSpec, config: &SolverConfig, state: &IterateState, workers: &Workers) -> bool {
    let Ok(kernels) = kernel::plain_kernels(problem, config.rho) else {
        return false;
    };
    let Ok(next) = kernel::jacobi_sweep(problem, &kernels, config.rho, &state.lambda, &state.x, workers) else {
        return false;
    };
    let change = next
        .iter()
        .zip(&state.x)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let scale = StopScale::at(problem, &state.x);
    change <= config.eps_abs * (1.0 + scale.iterate_norm)
}

fn drive<E: Engine>(
    problem: &ProblemSpec,
    config: &SolverConfig,
    mut engine: E,
    mut observer: Option<Observer<'_>>,
) -> Result<SolveReport, SolveError> {
    let t0 = Instant::now();
    let workers = Workers::new(config.parallel_workers)?;
    let x0 = engine.primal().to_vec();
    let mut trace = vec![record(0, diagnostics_for(problem, &x0, &x0, t0))];

    let finish = |engine: E, status, trace: Vec<TraceRecord>, message| {
        let iterations = trace.last().map_or(0, |r: &TraceRecord| r.k);
        let primal = engine.primal().to_vec();
        let mut final_state = engine.state().clone();
        final_state.k = iterations;
        Ok(SolveReport {
            scheme: config.scheme,
            status,
            final_state,
            primal,
            trace,
            iterations,
            message,
        })
    };

    if stopping_and_divergence_check(&trace, config, &StopScale::at(problem, &x0)) == Decision::Converged
        && initial_point_is_stationary(problem, config, engine.state(), &workers)
    {
        return finish(engine, SolveStatus::Converged, trace, None);
    }

    let mut k = 0;
    loop {
        let prev_state = engine.state().clone();
        let prev_primal = engine.primal().to_vec();
        let outcome = match engine.step(&workers) {
            Ok(o) => o,
            Err(e) => return finish(engine, SolveStatus::IllPosed, trace, Some(e.to_string())),
        };
        k += 1;
        engine.state_mut().k = k;
        let rec = record(k, diagnostics_for(problem, &prev_primal, engine.primal(), t0));
        trace.push(rec);
        if let Some(obs) = observer.as_mut() {
            obs(&IterationEvent {
                k,
                prev: &prev_state,
                curr: engine.state(),
                residual: &outcome.residual,
                multiplier_step: outcome.multiplier_step,
                extra: &outcome.extra,
                record: &rec,
            });
        }
        let scale = StopScale::at(problem, engine.primal());
        match stopping_and_divergence_check(&trace, config, &scale) {
            Decision::Continue => {}
            Decision::Converged => return finish(engine, SolveStatus::Converged, trace, None),
            Decision::Diverged => return finish(engine, SolveStatus::Diverged, trace, None),
            Decision::MaxIter => return finish(engine, SolveStatus::MaxIter, trace, None),
        }
    }
}
