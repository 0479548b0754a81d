//! Instance generators in canonical block form.
//!
//! * [`gen_random_qp`]: strongly convex quadratic blocks with dense random
//!   couplings, the standard test instance.
//! * [`gauss_seidel_stress`] and [`correlated_pair`]: small instances on
//!   which the direct Gauss-Seidel and Jacobi extensions fail.
//! * [`gen_state_estimation`]: multi-area robust state estimation with
//!   sparse measurement attacks.
//! * [`gen_energy_management`]: device scheduling over a horizon with
//!   net-level power balance and phase consistency.
//! * [`gen_scopf_qp`]: security-constrained DC optimal power flow.
//!
//! Every generator is a pure function of its options; equal seeds give
//! bit-identical problems.

mod energy;
mod random_qp;
mod scopf;
mod state_estimation;

use std::fmt;

use crate::io::{GroundTruth, FORMAT_VERSION};
use crate::problem::ProblemSpec;

pub use crate::oracle::{oracle_solve, OracleError, OracleSolution};
pub use energy::{gen_energy_management, DeviceKind, EnergyDevice, EnergyMgmtInstance, EnergyOptions};
pub use random_qp::{correlated_pair, gauss_seidel_stress, gen_orthogonal_qp, gen_random_qp, QpOptions};
pub use scopf::{gen_scopf_qp, Branch, ScopfInstance, ScopfOptions};
pub use state_estimation::{estimated_support, gen_state_estimation, StateEstInstance, StateEstOptions};

/// Rejected generator options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorError(pub String);

impl fmt::Display for GeneratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid generator options: {}", self.0)
    }
}

impl std::error::Error for GeneratorError {}

pub(crate) fn reject<T>(msg: impl Into<String>) -> Result<T, GeneratorError> {
    Err(GeneratorError(msg.into()))
}

/// A generated problem with whatever ground truth its generator knows.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub problem: ProblemSpec,
    pub truth: GroundTruth,
}

impl GeneratedInstance {
    pub fn new(generator: &str, seed: u64, problem: ProblemSpec) -> Self {
        Self {
            problem,
            truth: GroundTruth {
                format_version: FORMAT_VERSION,
                generator: generator.to_string(),
                seed,
                ..GroundTruth::default()
            },
        }
    }

    /// Solves the instance centrally and records the optimal value.
    pub fn with_oracle(mut self) -> Result<(Self, OracleSolution), OracleError> {
        let sol = oracle_solve(&self.problem)?;
        self.truth.oracle_objective = Some(sol.objective_star);
        Ok((self, sol))
    }
}
