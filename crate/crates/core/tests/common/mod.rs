#![allow(dead_code)]

use mbadmm::{DMatrix, DVector, ProblemSpec, Scheme, SolveReport, SolverConfig, TraceRecord};

/// `|obj − reference| / max(1, |reference|)`.
pub fn rel_gap(obj: f64, reference: f64) -> f64 {
    (obj - reference).abs() / reference.abs().max(1.0)
}

pub fn final_objective(report: &SolveReport) -> f64 {
    report.final_record().objective.as_f64()
}

/// Runs exactly `iters` iterations: the tolerances can never be met.
pub fn fixed_iterations(scheme: Scheme, iters: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(scheme);
    cfg.eps_abs = f64::MIN_POSITIVE;
    cfg.eps_rel = f64::MIN_POSITIVE;
    cfg.max_iter = iters;
    cfg
}

/// Trace fields that are deterministic, as raw bits.
pub fn trace_bits(trace: &[TraceRecord]) -> Vec<(usize, u64, u64, u64)> {
    trace
        .iter()
        .map(|r| {
            (
                r.k,
                r.objective.as_f64().to_bits(),
                r.primal_residual_norm.to_bits(),
                r.iterate_change.to_bits(),
            )
        })
        .collect()
}

pub fn blocks_bits(x: &[DVector<f64>]) -> Vec<Vec<u64>> {
    x.iter().map(|v| v.iter().map(|e| e.to_bits()).collect()).collect()
}

/// `Σ A_i x_i − c`, accumulated row by row without touching the library.
pub fn naive_residual(problem: &ProblemSpec, x: &[DVector<f64>]) -> DVector<f64> {
    let m = problem.rows();
    DVector::from_fn(m, |r, _| {
        let mut s = -problem.rhs()[r];
        for (i, xi) in x.iter().enumerate() {
            let a = problem.coupling(i);
            for j in 0..xi.len() {
                s += a[(r, j)] * xi[j];
            }
        }
        s
    })
}

/// One Gauss-Seidel pass of the unregularized scheme on scalar blocks with
/// `f_i ≡ 0`, written out by hand: `x_i = a_iᵀ(λ/ρ − Σ_{j≠i} a_j x_j + c) / ‖a_i‖²`.
pub fn scalar_zero_objective_gs_step(cols: &[DVector<f64>], c: &DVector<f64>, rho: f64, x: &mut [f64], lambda: &mut DVector<f64>) {
    for i in 0..cols.len() {
        let mut others = -c.clone();
        for (j, a) in cols.iter().enumerate() {
            if j != i {
                others += a * x[j];
            }
        }
        x[i] = cols[i].dot(&(&*lambda / rho - others)) / cols[i].norm_squared();
    }
    let mut r = -c.clone();
    for (a, xi) in cols.iter().zip(x.iter()) {
        r += a * *xi;
    }
    *lambda -= r * rho;
}

/// Spectral radius of the linear Gauss-Seidel map on `(x_2, …, x_N, λ)` for
/// scalar blocks with zero objectives, from its explicit matrix.
pub fn gs_map_spectral_radius(cols: &[DVector<f64>], rho: f64) -> f64 {
    let n = cols.len();
    let m = cols[0].len();
    let dim = (n - 1) + m;
    let c = DVector::zeros(m);
    let mut map = DMatrix::zeros(dim, dim);
    for e in 0..dim {
        let mut x = vec![0.0; n];
        let mut lambda = DVector::zeros(m);
        if e < n - 1 {
            x[e + 1] = 1.0;
        } else {
            lambda[e - (n - 1)] = 1.0;
        }
        scalar_zero_objective_gs_step(cols, &c, rho, &mut x, &mut lambda);
        for i in 1..n {
            map[(i - 1, e)] = x[i];
        }
        for r in 0..m {
            map[(n - 1 + r, e)] = lambda[r];
        }
    }
    map.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Equality-constrained QP optimum from one dense LU solve of
/// `[Q Aᵀ; A 0] [x; ν] = [−q; c]`. Every block must be an unbounded
/// quadratic.
pub fn kkt_optimum(problem: &ProblemSpec) -> (Vec<DVector<f64>>, f64) {
    use mbadmm::{LocalSet, ObjectiveHandle};
    let dims = problem.block_dims();
    let n: usize = dims.iter().sum();
    let m = problem.rows();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    let mut off = 0;
    let mut constant = 0.0;
    for (i, b) in problem.blocks().iter().enumerate() {
        assert_eq!(b.local_set, LocalSet::Unbounded, "block {i} is constrained");
        let ObjectiveHandle::Quadratic { q_mat, q_vec, constant: k } = &b.objective else {
            panic!("block {i} is not quadratic");
        };
        let d = dims[i];
        kkt.view_mut((off, off), (d, d)).copy_from(q_mat);
        kkt.view_mut((n, off), (m, d)).copy_from(&b.coupling);
        kkt.view_mut((off, n), (d, m)).copy_from(&b.coupling.transpose());
        rhs.rows_mut(off, d).copy_from(&(-q_vec));
        constant += k;
        off += d;
    }
    rhs.rows_mut(n, m).copy_from(problem.rhs());
    let sol = kkt.clone().lu().solve(&rhs).expect("nonsingular KKT system");
    let mut x = Vec::new();
    let mut value = constant;
    let mut off = 0;
    for (i, b) in problem.blocks().iter().enumerate() {
        let xi = sol.rows(off, dims[i]).into_owned();
        if let ObjectiveHandle::Quadratic { q_mat, q_vec, .. } = &b.objective {
            value += 0.5 * xi.dot(&(q_mat * &xi)) + q_vec.dot(&xi);
        }
        x.push(xi);
        off += dims[i];
    }
    (x, value)
}
