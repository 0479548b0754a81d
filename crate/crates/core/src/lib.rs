//! Multi-block ADMM for block-separable convex programs.
//!
//! The canonical problem is
//!
//! ```text
//!   minimize    f_1(x_1) + ... + f_N(x_N)
//!   subject to  A_1 x_1 + ... + A_N x_N = c,   x_i ∈ X_i
//! ```
//!
//! where each `f_i` is closed, convex and proper (possibly nonsmooth) and each
//! `X_i` is a simple closed convex set. Six iteration schemes share one
//! interface ([`solvers::solve`]):
//!
//! * two-block ADMM,
//! * the direct Gauss-Seidel and Jacobi extensions to N blocks,
//! * variable-splitting ADMM (auxiliary `z` with a zero-sum constraint),
//! * ADMM with Gaussian back substitution,
//! * proximal Jacobian ADMM.
//!
//! [`apps`] generates smart-grid instances (robust state estimation, network
//! energy management, security-constrained DC OPF) in canonical form, and
//! [`oracle`] solves the monolithic problem for reference values.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod error;
pub mod io;
pub mod oracle;
pub mod problem;
pub mod prox;
pub mod solvers;
pub mod trace;

pub use error::{ProblemError, ProxError, SolveError};
pub use problem::{
    assemble_problem, compute_diagnostics, eval_augmented_lagrangian, eval_objective, BlockSpec,
    Diagnostics, IterateState, LocalSet, ObjectiveValue, ProblemSpec,
};
pub use prox::ObjectiveHandle;
pub use solvers::{
    solve, solve_observed, ProxPolicy, Scheme, SolveReport, SolveStatus, SolverConfig,
    TraceRecord,
};

pub use nalgebra::{DMatrix, DVector};
