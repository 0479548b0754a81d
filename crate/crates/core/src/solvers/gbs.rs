use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::{gauss_seidel_sweep, plain_kernels, BlockKernel, Workers};
use super::{Engine, SolverConfig, StepExtra, StepOutcome};
use crate::error::{ProxError, SolveError};
use crate::problem::{IterateState, ProblemSpec};

/// Largest condition number of `A_iᵀA_i` (blocks 2..N) the correction
/// accepts.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Matrices of the correction step on `v = (x_2, …, x_N, λ)`:
/// `H = diag(ρA_2ᵀA_2, …, ρA_NᵀA_N, I/ρ)` and the block lower triangular
/// `M` with `M_ij = ρA_iᵀA_j` for `i ≥ j` and `I/ρ` in the multiplier slot.
/// The correction solves `Mᵀ(v⁺ − v) = αH(ṽ − v)`.
#[derive(Debug, Clone)]
pub struct GbsOperators {
    grams: Vec<Cholesky<f64, Dyn>>,
    offsets: Vec<usize>,
    h: DMatrix<f64>,
    m: DMatrix<f64>,
}

impl GbsOperators {
    pub fn new(problem: &ProblemSpec, rho: f64) -> Result<Self, SolveError> {
        if !(rho > 0.0) {
            return Err(SolveError::Config(format!("rho must be positive, got {rho}")));
        }
        let n = problem.num_blocks();
        if n < 2 {
            return Err(SolveError::WrongScheme {
                scheme: "gbs",
                expected: "at least 2",
                actual: n,
            });
        }
        let rows = problem.rows();
        let mut grams = Vec::with_capacity(n - 1);
        let mut offsets = vec![0];
        for i in 1..n {
            let a = problem.coupling(i);
            let g = a.tr_mul(a);
            let eig = g.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0 && hi / lo < MAX_GRAM_CONDITION) {
                return Err(SolveError::Precondition(format!(
                    "gbs needs full column rank couplings for blocks 2..N; block {} has A^T A with eigenvalues in [{lo:e}, {hi:e}]",
                    i + 1
                )));
            }
            grams.push(Cholesky::new(g).expect("positive definite by the eigenvalue check"));
            offsets.push(offsets[i - 1] + a.ncols());
        }
        let xdim = *offsets.last().unwrap_or(&0);
        let total = xdim + rows;
        let mut h = DMatrix::zeros(total, total);
        let mut m = DMatrix::zeros(total, total);
        for i in 1..n {
            let ai = problem.coupling(i);
            for j in 1..=i {
                let aj = problem.coupling(j);
                let blk = ai.tr_mul(aj) * rho;
                m.view_mut((offsets[i - 1], offsets[j - 1]), blk.shape()).copy_from(&blk);
                if i == j {
                    h.view_mut((offsets[i - 1], offsets[j - 1]), blk.shape()).copy_from(&blk);
                }
            }
        }
        for r in 0..rows {
            h[(xdim + r, xdim + r)] = 1.0 / rho;
            m[(xdim + r, xdim + r)] = 1.0 / rho;
        }
        Ok(Self {
            grams,
            offsets,
            h,
            m,
        })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Stacks `(x_2, …, x_N, λ)`.
    pub fn stack(&self, x: &[DVector<f64>], lambda: &DVector<f64>) -> DVector<f64> {
        let xdim = *self.offsets.last().unwrap_or(&0);
        let mut v = DVector::zeros(xdim + lambda.len());
        for (i, xi) in x.iter().enumerate().skip(1) {
            v.rows_mut(self.offsets[i - 1], xi.len()).copy_from(xi);
        }
        v.rows_mut(xdim, lambda.len()).copy_from(lambda);
        v
    }

    /// `(‖Mᵀ(v⁺ − v) − αH(ṽ − v)‖∞, 1e-9·(1 + ‖H(ṽ − v)‖∞))`.
    pub fn correction_residual(
        &self,
        v_prev: &DVector<f64>,
        v_next: &DVector<f64>,
        v_pred: &DVector<f64>,
        alpha: f64,
    ) -> (f64, f64) {
        let rhs = &self.h * (v_pred - v_prev);
        let lhs = self.m.tr_mul(&(v_next - v_prev));
        let err = (lhs - &rhs * alpha).amax();
        (err, 1e-9 * (1.0 + rhs.amax()))
    }

    /// Back substitution from block N down to block 2 in place, and the
    /// relaxed multiplier.
    fn correct(
        &self,
        problem: &ProblemSpec,
        alpha: f64,
        x: &mut [DVector<f64>],
        predicted: &[DVector<f64>],
        lambda: &mut DVector<f64>,
        predicted_lambda: &DVector<f64>,
    ) {
        let n = x.len();
        let mut tail = DVector::zeros(problem.rows());
        for i in (1..n).rev() {
            let a = problem.coupling(i);
            // (A_iᵀA_i) d_i = α A_iᵀA_i (x̃_i − x_i) − A_iᵀ Σ_{j>i} A_j d_j
            let d = (&predicted[i] - &x[i]) * alpha - self.grams[i - 1].solve(&a.tr_mul(&tail));
            tail += a * &d;
            x[i] += d;
        }
        x[0].copy_from(&predicted[0]);
        *lambda += (predicted_lambda - &*lambda) * alpha;
    }
}

/// Gauss-Seidel prediction `(x̃, λ̃)` followed by the back substitution
/// correction. The trace follows the predictions, which lie in the local
/// sets.
pub(crate) struct GbsEngine<'p> {
    problem: &'p ProblemSpec,
    kernels: Vec<BlockKernel>,
    ops: GbsOperators,
    rho: f64,
    alpha: f64,
    state: IterateState,
    predicted: Vec<DVector<f64>>,
}

impl<'p> GbsEngine<'p> {
    pub fn new(problem: &'p ProblemSpec, config: &SolverConfig, x0: IterateState) -> Result<Self, SolveError> {
        let ops = GbsOperators::new(problem, config.rho)?;
        Ok(Self {
            problem,
            kernels: plain_kernels(problem, config.rho)?,
            ops,
            rho: config.rho,
            alpha: config.alpha,
            predicted: x0.x.clone(),
            state: x0,
        })
    }
}

impl Engine for GbsEngine<'_> {
    fn state(&self) -> &IterateState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut IterateState {
        &mut self.state
    }

    fn primal(&self) -> &[DVector<f64>] {
        &self.predicted
    }

    fn step(&mut self, _workers: &Workers) -> Result<StepOutcome, ProxError> {
        let mut xt = self.state.x.clone();
        gauss_seidel_sweep(self.problem, &self.kernels, self.rho, &self.state.lambda, &mut xt)?;
        let r = self.problem.residual(&xt);
        let lt = &self.state.lambda - &r * self.rho;
        self.ops.correct(
            self.problem,
            self.alpha,
            &mut self.state.x,
            &xt,
            &mut self.state.lambda,
            &lt,
        );
        self.predicted = xt.clone();
        Ok(StepOutcome {
            residual: r,
            multiplier_step: self.rho,
            extra: StepExtra::Gbs {
                predicted_x: xt,
                predicted_lambda: lt,
            },
        })
    }
}
