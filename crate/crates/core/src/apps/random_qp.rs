use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{reject, GeneratorError};
use crate::problem::{assemble_problem, BlockSpec, LocalSet, ProblemSpec};
use crate::prox::ObjectiveHandle;

#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    pub blocks: usize,
    /// Coupling rows `m`.
    pub rows: usize,
    /// Upper bound on every block dimension; dimensions are drawn from
    /// `1..=min(max_block_dim, rows)`.
    pub max_block_dim: usize,
    pub seed: u64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            blocks: 3,
            rows: 6,
            max_block_dim: 4,
            seed: 0,
        }
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Strongly convex quadratic block `½xᵀQx + qᵀx` with `Q = BBᵀ/n + I/2`.
fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> ObjectiveHandle {
    let b = normal_matrix(rng, n, n);
    let q_mat = (&b * b.transpose()) / n as f64 + DMatrix::identity(n, n) * 0.5;
    ObjectiveHandle::Quadratic {
        q_mat,
        q_vec: normal_vector(rng, n),
        constant: 0.0,
    }
}

/// Standard quadratic test instance: strongly convex quadratic blocks,
/// Gaussian couplings with `n_i ≤ m` (full column rank almost surely) and
/// `c = Σ A_i x̂_i` for a random point `x̂`.
pub fn gen_random_qp(opts: &QpOptions) -> Result<ProblemSpec, GeneratorError> {
    if opts.blocks == 0 || opts.rows == 0 || opts.max_block_dim == 0 {
        return reject("blocks, rows and max_block_dim must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cap = opts.max_block_dim.min(opts.rows);
    let mut c = DVector::zeros(opts.rows);
    let mut blocks = Vec::with_capacity(opts.blocks);
    for _ in 0..opts.blocks {
        let n = rng.random_range(1..=cap);
        let objective = random_quadratic(&mut rng, n);
        let a = normal_matrix(&mut rng, opts.rows, n);
        c += &a * normal_vector(&mut rng, n);
        blocks.push(BlockSpec::new(objective, a, LocalSet::Unbounded));
    }
    Ok(assemble_problem(blocks, c).expect("generated blocks are conforming"))
}

/// Quadratic instance whose couplings act on disjoint row sets, so
/// `A_iᵀA_j = 0` for `i ≠ j`. Each block has `dim` columns and owns `dim`
/// rows.
pub fn gen_orthogonal_qp(blocks: usize, dim: usize, seed: u64) -> Result<ProblemSpec, GeneratorError> {
    if blocks == 0 || dim == 0 {
        return reject("blocks and dim must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = blocks * dim;
    let mut c = DVector::zeros(rows);
    let mut specs = Vec::with_capacity(blocks);
    for i in 0..blocks {
        let objective = random_quadratic(&mut rng, dim);
        let mut a = DMatrix::zeros(rows, dim);
        let own = normal_matrix(&mut rng, dim, dim) + DMatrix::identity(dim, dim) * 2.0;
        a.view_mut((i * dim, 0), (dim, dim)).copy_from(&own);
        c += &a * normal_vector(&mut rng, dim);
        specs.push(BlockSpec::new(objective, a, LocalSet::Unbounded));
    }
    Ok(assemble_problem(specs, c).expect("generated blocks are conforming"))
}

/// Three scalar blocks with zero objectives and couplings `(1,1,1)ᵀ`,
/// `(1,1,2)ᵀ`, `(1,2,2)ᵀ`, `c = 0`. The linear map of one Gauss-Seidel
/// iteration on `(x_2, x_3, λ)` has spectral radius above one, so the
/// direct extension diverges from any generic start.
pub fn gauss_seidel_stress() -> ProblemSpec {
    let blocks = [dmatrix![1.0; 1.0; 1.0], dmatrix![1.0; 1.0; 2.0], dmatrix![1.0; 2.0; 2.0]]
        .into_iter()
        .map(|a| BlockSpec::new(ObjectiveHandle::Zero, a, LocalSet::Unbounded))
        .collect();
    assemble_problem(blocks, dvector![0.0, 0.0, 0.0]).expect("fixed instance is valid")
}

/// Two scalar blocks with identical couplings `A_1 = A_2 = 1`, small
/// quadratic objectives and `c = 1`. Plain Jacobi updates have an
/// eigenvalue of modulus above one here.
pub fn correlated_pair() -> ProblemSpec {
    let quad = |t: f64| ObjectiveHandle::Quadratic {
        q_mat: dmatrix![0.01],
        q_vec: dvector![-0.01 * t],
        constant: 0.0,
    };
    assemble_problem(
        vec![
            BlockSpec::new(quad(1.0), dmatrix![1.0], LocalSet::Unbounded),
            BlockSpec::new(quad(-1.0), dmatrix![1.0], LocalSet::Unbounded),
        ],
        dvector![1.0],
    )
    .expect("fixed instance is valid")
}
