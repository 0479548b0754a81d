use nalgebra::DVector;

use super::kernel::{plain_kernels, BlockKernel, Workers};
use super::{Engine, SolverConfig, StepExtra, StepOutcome};
use crate::error::{ProxError, SolveError};
use crate::problem::{IterateState, ProblemSpec};
use crate::prox::project_zero_sum;

/// Each block gets its own copy of the constraint, `A_i x_i + z_i = c/N`,
/// and its own multiplier; the slacks satisfy `Σ z_i = 0`.
pub(crate) struct SplittingEngine<'p> {
    problem: &'p ProblemSpec,
    kernels: Vec<BlockKernel>,
    rho: f64,
    share: DVector<f64>,
    state: IterateState,
}

impl<'p> SplittingEngine<'p> {
    pub fn new(problem: &'p ProblemSpec, config: &SolverConfig, mut x0: IterateState) -> Result<Self, SolveError> {
        let n = problem.num_blocks();
        let share = problem.rhs() / n as f64;
        if x0.z.is_none() {
            let w: Vec<_> = (0..n).map(|i| &share - problem.coupling(i) * &x0.x[i]).collect();
            x0.z = Some(project_zero_sum(&w)?);
        }
        if x0.lambda_blocks.is_none() {
            x0.lambda_blocks = Some(vec![x0.lambda.clone(); n]);
        }
        x0.lambda = average(x0.lambda_blocks.as_deref().unwrap_or_default());
        Ok(Self {
            problem,
            kernels: plain_kernels(problem, config.rho)?,
            rho: config.rho,
            share,
            state: x0,
        })
    }
}

fn average(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(vs.first().map_or(0, |v| v.len()));
    for v in vs {
        acc += v;
    }
    acc / vs.len().max(1) as f64
}

impl Engine for SplittingEngine<'_> {
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
        let problem = self.problem;
        let rho = self.rho;
        let share = &self.share;
        let z = self.state.z.as_ref().expect("splitting state has slacks");
        let lam = self.state.lambda_blocks.as_ref().expect("splitting state has block multipliers");
        let x_old = &self.state.x;
        let x: Vec<DVector<f64>> = workers
            .map(self.kernels.len(), |i| {
                let offset = &z[i] - share;
                let linear = self.kernels[i].coupling_linear(rho, &offset, &lam[i]);
                self.kernels[i].solve(&linear, &x_old[i])
            })
            .into_iter()
            .collect::<Result<_, _>>()?;

        let ax: Vec<DVector<f64>> = x.iter().enumerate().map(|(i, xi)| problem.coupling(i) * xi).collect();
        let w: Vec<DVector<f64>> = (0..x.len()).map(|i| share - &ax[i] + &lam[i] / rho).collect();
        let z_new = project_zero_sum(&w)?;
        let block_residuals: Vec<DVector<f64>> = (0..x.len()).map(|i| &ax[i] + &z_new[i] - share).collect();
        let lam_new: Vec<DVector<f64>> = lam.iter().zip(&block_residuals).map(|(l, r)| l - r * rho).collect();

        let mut total = DVector::zeros(problem.rows());
        for r in &block_residuals {
            total += r;
        }
        self.state.x = x;
        self.state.z = Some(z_new);
        self.state.lambda = average(&lam_new);
        self.state.lambda_blocks = Some(lam_new);
        Ok(StepOutcome {
            residual: total,
            multiplier_step: rho / problem.num_blocks() as f64,
            extra: StepExtra::Splitting { block_residuals },
        })
    }
}
