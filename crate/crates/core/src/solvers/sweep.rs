use nalgebra::DVector;

use super::kernel::{gauss_seidel_sweep, plain_kernels, BlockKernel, Workers};
use super::{Engine, SolverConfig, StepExtra, StepOutcome};
use crate::error::{ProxError, SolveError};
use crate::problem::{IterateState, ProblemSpec};

/// Sequential block sweep followed by one multiplier step. With two blocks
/// this is classical ADMM.
pub(crate) struct SweepEngine<'p> {
    problem: &'p ProblemSpec,
    kernels: Vec<BlockKernel>,
    rho: f64,
    state: IterateState,
}

impl<'p> SweepEngine<'p> {
    pub fn new(problem: &'p ProblemSpec, config: &SolverConfig, x0: IterateState) -> Result<Self, SolveError> {
        Ok(Self {
            problem,
            kernels: plain_kernels(problem, config.rho)?,
            rho: config.rho,
            state: x0,
        })
    }
}

impl Engine for SweepEngine<'_> {
    fn state(&self) -> &IterateState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut IterateState {
        &mut self.state
    }

    fn primal(&self) -> &[DVector<f64>] {
        &self.state.x
    }

    fn step(&mut self, _workers: &Workers) -> Result<StepOutcome, ProxError> {
        let mut x = self.state.x.clone();
        gauss_seidel_sweep(self.problem, &self.kernels, self.rho, &self.state.lambda, &mut x)?;
        let r = self.problem.residual(&x);
        self.state.lambda -= &r * self.rho;
        self.state.x = x;
        Ok(StepOutcome {
            residual: r,
            multiplier_step: self.rho,
            extra: StepExtra::None,
        })
    }
}
