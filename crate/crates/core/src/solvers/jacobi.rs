use nalgebra::{DMatrix, DVector};

use super::kernel::{jacobi_sweep, others_minus_rhs, plain_kernels, products, BlockKernel, Workers};
use super::{Engine, ProxPolicy, SolverConfig, StepExtra, StepOutcome};
use crate::error::{ProxError, SolveError};
use crate::problem::{IterateState, ProblemSpec};

enum Proximal {
    None,
    /// `P_i = τ_i I − ρA_iᵀA_i`; holds `τ_i`.
    Linearized(Vec<f64>),
    Custom(Vec<DMatrix<f64>>),
}

/// Concurrent block updates from a common snapshot, optionally with a
/// proximal term and a damped multiplier step.
pub(crate) struct JacobiEngine<'p> {
    problem: &'p ProblemSpec,
    kernels: Vec<BlockKernel>,
    proximal: Proximal,
    rho: f64,
    multiplier_step: f64,
    state: IterateState,
}

impl<'p> JacobiEngine<'p> {
    pub fn plain(problem: &'p ProblemSpec, config: &SolverConfig, x0: IterateState) -> Result<Self, SolveError> {
        Ok(Self {
            problem,
            kernels: plain_kernels(problem, config.rho)?,
            proximal: Proximal::None,
            rho: config.rho,
            multiplier_step: config.rho,
            state: x0,
        })
    }

    pub fn proximal(problem: &'p ProblemSpec, config: &SolverConfig, x0: IterateState) -> Result<Self, SolveError> {
        let rho = config.rho;
        let n = problem.num_blocks();
        let (kernels, proximal) = match &config.prox_policy {
            ProxPolicy::Zero => (plain_kernels(problem, rho)?, Proximal::None),
            ProxPolicy::Linearized { factor } => {
                let mut taus = Vec::with_capacity(n);
                let mut kernels = Vec::with_capacity(n);
                for i in 0..n {
                    let tau = factor * rho * n as f64 * spectral_norm_sq(problem.coupling(i));
                    let dim = problem.block(i).dim();
                    kernels.push(BlockKernel::with_curvature(problem, i, DMatrix::identity(dim, dim) * tau)?);
                    taus.push(tau);
                }
                (kernels, Proximal::Linearized(taus))
            }
            ProxPolicy::Custom(ps) => {
                check_custom(problem, ps)?;
                let kernels = (0..n)
                    .map(|i| BlockKernel::new(problem, i, rho, Some(&ps[i])))
                    .collect::<Result<Vec<_>, _>>()?;
                (kernels, Proximal::Custom(ps.clone()))
            }
        };
        Ok(Self {
            problem,
            kernels,
            proximal,
            rho,
            multiplier_step: config.gamma * rho,
            state: x0,
        })
    }

    fn proximal_sweep(&self, workers: &Workers) -> Result<Vec<DVector<f64>>, ProxError> {
        let problem = self.problem;
        let x = &self.state.x;
        let lambda = &self.state.lambda;
        let rho = self.rho;
        let ax = products(problem, x);
        let r = {
            let mut acc = DVector::zeros(problem.rows());
            for v in &ax {
                acc += v;
            }
            acc - problem.rhs()
        };
        workers
            .map(self.kernels.len(), |i| {
                let kernel = &self.kernels[i];
                let linear = match &self.proximal {
                    Proximal::Linearized(taus) => kernel.coupling_linear(rho, &r, lambda) - &x[i] * taus[i],
                    Proximal::Custom(ps) => {
                        let offset = others_minus_rhs(&ax, i, problem.rhs());
                        kernel.coupling_linear(rho, &offset, lambda) - &ps[i] * &x[i]
                    }
                    Proximal::None => unreachable!("plain sweeps use jacobi_sweep"),
                };
                kernel.solve(&linear, &x[i])
            })
            .into_iter()
            .collect()
    }
}

fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let g = a.tr_mul(a);
    g.symmetric_eigenvalues().max().max(0.0)
}

fn check_custom(problem: &ProblemSpec, ps: &[DMatrix<f64>]) -> Result<(), SolveError> {
    if ps.len() != problem.num_blocks() {
        return Err(SolveError::Config(format!(
            "custom prox policy has {} matrices for {} blocks",
            ps.len(),
            problem.num_blocks()
        )));
    }
    for (i, p) in ps.iter().enumerate() {
        let n = problem.block(i).dim();
        if p.shape() != (n, n) {
            return Err(SolveError::Config(format!(
                "prox matrix of block {} is {}x{}, expected {n}x{n}",
                i + 1,
                p.nrows(),
                p.ncols()
            )));
        }
        let amax = p.amax();
        let tol = 1e-10 * (1.0 + amax);
        if (p - p.transpose()).amax() > tol {
            return Err(SolveError::Config(format!("prox matrix of block {} is not symmetric", i + 1)));
        }
        if n > 0 && p.clone().symmetric_eigenvalues().min() < -tol {
            return Err(SolveError::Config(format!(
                "prox matrix of block {} is not positive semidefinite",
                i + 1
            )));
        }
    }
    Ok(())
}

impl Engine for JacobiEngine<'_> {
    fn state(&self) -> &IterateState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut IterateState {
        &mut self.state
    }

    fn primal(&self) -> &[DVector<f64>] {
        &self.state.x
    }

    fn step(&mut self, workers: &Workers) -> Result<StepOutcome, ProxError> {
        let x = match self.proximal {
            Proximal::None => jacobi_sweep(
                self.problem,
                &self.kernels,
                self.rho,
                &self.state.lambda,
                &self.state.x,
                workers,
            )?,
            _ => self.proximal_sweep(workers)?,
        };
        let r = self.problem.residual(&x);
        self.state.lambda -= &r * self.multiplier_step;
        self.state.x = x;
        Ok(StepOutcome {
            residual: r,
            multiplier_step: self.multiplier_step,
            extra: StepExtra::None,
        })
    }
}
