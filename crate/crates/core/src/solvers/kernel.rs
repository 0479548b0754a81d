use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{ProxError, SolveError};
use crate::problem::ProblemSpec;
use crate::prox::PreparedSubproblem;

/// Block-update worker pool. Results always come back in block order.
pub(crate) enum Workers {
    Serial,
    Pool(rayon::ThreadPool),
}

impl Workers {
    pub fn new(count: usize) -> Result<Self, SolveError> {
        if count <= 1 {
            return Ok(Workers::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .map(Workers::Pool)
            .map_err(|e| SolveError::Config(format!("cannot start {count} workers: {e}")))
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Workers::Serial => (0..n).map(f).collect(),
            Workers::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

/// Prepared block update of one block: curvature factored once, linear term
/// supplied per iteration.
#[derive(Debug, Clone)]
pub(crate) struct BlockKernel {
    pub a: DMatrix<f64>,
    pub sub: PreparedSubproblem,
}

impl BlockKernel {
    /// Augmented-Lagrangian block update, curvature `ρ A_iᵀ A_i (+ extra)`.
    pub fn new(problem: &ProblemSpec, i: usize, rho: f64, extra: Option<&DMatrix<f64>>) -> Result<Self, ProxError> {
        let a = problem.coupling(i).clone();
        let mut h = a.tr_mul(&a) * rho;
        if let Some(p) = extra {
            h += p;
        }
        Self::with_curvature(problem, i, h)
    }

    pub fn with_curvature(problem: &ProblemSpec, i: usize, h: DMatrix<f64>) -> Result<Self, ProxError> {
        let sub = PreparedSubproblem::new(problem.model(i), &h)?;
        Ok(Self {
            a: problem.coupling(i).clone(),
            sub,
        })
    }

    /// `A_iᵀ(ρ·offset − λ)`: linear term of
    /// `−λᵀ A_i x + (ρ/2)‖A_i x + offset‖²`.
    pub fn coupling_linear(&self, rho: f64, offset: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(offset * rho - lambda))
    }

    pub fn solve(&self, linear: &DVector<f64>, warm: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
        self.sub.solve(linear, Some(warm))
    }
}

/// `Σ_{j≠i} A_j x_j − c`, summed in block order.
pub(crate) fn others_minus_rhs(ax: &[DVector<f64>], i: usize, c: &DVector<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(c.len());
    for (j, v) in ax.iter().enumerate() {
        if j != i {
            acc += v;
        }
    }
    acc -= c;
    acc
}

pub(crate) fn products(problem: &ProblemSpec, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
    x.iter()
        .enumerate()
        .map(|(i, xi)| problem.coupling(i) * xi)
        .collect()
}

/// One forward Gauss-Seidel pass over all blocks, updating `x` in place.
pub(crate) fn gauss_seidel_sweep(
    problem: &ProblemSpec,
    kernels: &[BlockKernel],
    rho: f64,
    lambda: &DVector<f64>,
    x: &mut [DVector<f64>],
) -> Result<(), ProxError> {
    let mut ax = products(problem, x);
    for (i, kernel) in kernels.iter().enumerate() {
        let offset = others_minus_rhs(&ax, i, problem.rhs());
        let linear = kernel.coupling_linear(rho, &offset, lambda);
        x[i] = kernel.solve(&linear, &x[i])?;
        ax[i] = problem.coupling(i) * &x[i];
    }
    Ok(())
}

/// One Jacobi pass from the snapshot `x`; returns the new blocks.
pub(crate) fn jacobi_sweep(
    problem: &ProblemSpec,
    kernels: &[BlockKernel],
    rho: f64,
    lambda: &DVector<f64>,
    x: &[DVector<f64>],
    workers: &Workers,
) -> Result<Vec<DVector<f64>>, ProxError> {
    let ax = products(problem, x);
    workers
        .map(kernels.len(), |i| {
            let offset = others_minus_rhs(&ax, i, problem.rhs());
            let linear = kernels[i].coupling_linear(rho, &offset, lambda);
            kernels[i].solve(&linear, &x[i])
        })
        .into_iter()
        .collect()
}

pub(crate) fn plain_kernels(problem: &ProblemSpec, rho: f64) -> Result<Vec<BlockKernel>, ProxError> {
    (0..problem.num_blocks())
        .map(|i| BlockKernel::new(problem, i, rho, None))
        .collect()
}
