use nalgebra::DVector;

use super::{SolverConfig, TraceRecord};
use crate::problem::ProblemSpec;

/// Residual growth factor (relative to `1 + initial residual`) that counts
/// as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Converged,
    Diverged,
    MaxIter,
}

/// Magnitudes the tolerances are scaled by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopScale {
    /// Number of coupling rows `m`.
    pub rows: usize,
    /// `max(‖c‖, max_i ‖A_i x_i‖)`.
    pub residual_scale: f64,
    /// `max_i ‖x_i‖`.
    pub iterate_norm: f64,
}

impl StopScale {
    pub fn at(problem: &ProblemSpec, x: &[DVector<f64>]) -> Self {
        let mut residual_scale = problem.rhs().norm();
        let mut iterate_norm = 0.0_f64;
        for (i, xi) in x.iter().enumerate() {
            residual_scale = residual_scale.max((problem.coupling(i) * xi).norm());
            iterate_norm = iterate_norm.max(xi.norm());
        }
        Self {
            rows: problem.rows(),
            residual_scale,
            iterate_norm,
        }
    }
}

/// Stopping decision from the trace so far.
///
/// Divergence: the latest residual is non-finite or exceeds
/// `DIVERGENCE_FACTOR · (1 + initial residual)`. Convergence: residual
/// `≤ eps_abs·√m + eps_rel·scale` and iterate change
/// `≤ eps_abs·(1 + max_i‖x_i‖)`.
pub fn stopping_and_divergence_check(trace: &[TraceRecord], config: &SolverConfig, scale: &StopScale) -> Decision {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Decision::Continue;
    };
    let r = last.primal_residual_norm;
    if !r.is_finite() || !last.iterate_change.is_finite() {
        return Decision::Diverged;
    }
    if r > DIVERGENCE_FACTOR * (1.0 + first.primal_residual_norm) {
        return Decision::Diverged;
    }
    let primal_tol = config.eps_abs * (scale.rows as f64).sqrt() + config.eps_rel * scale.residual_scale;
    let change_tol = config.eps_abs * (1.0 + scale.iterate_norm);
    if r <= primal_tol && last.iterate_change <= change_tol {
        return Decision::Converged;
    }
    if last.k >= config.max_iter {
        return Decision::MaxIter;
    }
    Decision::Continue
}
