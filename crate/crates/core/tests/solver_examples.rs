mod common;

use common::*;
use mbadmm::apps::{correlated_pair, gauss_seidel_stress, gen_orthogonal_qp, gen_random_qp, QpOptions};
use mbadmm::solvers::{
    solve_gauss_seidel, solve_gbs, solve_jacobi, solve_prox_jacobi, solve_two_block, solve_variable_splitting,
};
use mbadmm::{
    assemble_problem, BlockSpec, DMatrix, DVector, IterateState, LocalSet, ObjectiveHandle, ProblemSpec, Scheme,
    SolveReport, SolveStatus, SolverConfig,
};

fn qp(blocks: usize, rows: usize, dim: usize, seed: u64) -> ProblemSpec {
    gen_random_qp(&QpOptions {
        blocks,
        rows,
        max_block_dim: dim,
        seed,
    })
    .unwrap()
}

/// Defaults with the stopping rule tightened so the final objective is
/// resolved well past 1e-6.
fn tight(scheme: Scheme) -> SolverConfig {
    let mut cfg = SolverConfig::new(scheme);
    cfg.eps_abs = 1e-11;
    cfg.eps_rel = 1e-9;
    cfg
}

fn assert_matches_kkt(p: &ProblemSpec, r: &SolveReport, tol: f64) {
    let (_, star) = kkt_optimum(p);
    assert_eq!(r.status, SolveStatus::Converged, "{} stopped after {}", r.scheme, r.iterations);
    let gap = rel_gap(final_objective(r), star);
    assert!(gap <= tol, "{}: gap {gap:e}", r.scheme);
}

#[test]
fn two_block_quadratic_matches_kkt() {
    let p = qp(2, 3, 3, 1);
    let r = solve_two_block(&p, &tight(Scheme::TwoBlock), None).unwrap();
    assert_matches_kkt(&p, &r, 1e-6);
}

/// Proximal gradient on `½‖Dx − d‖² + β‖x‖₁`, soft threshold written inline.
fn lasso_prox_gradient(d_mat: &DMatrix<f64>, d: &DVector<f64>, beta: f64, steps: usize) -> (DVector<f64>, f64) {
    let gram = d_mat.tr_mul(d_mat);
    let lip = gram.symmetric_eigenvalues().max();
    let t = 1.0 / lip;
    let mut x = DVector::zeros(d_mat.ncols());
    for _ in 0..steps {
        let v = &x - (d_mat.tr_mul(&(d_mat * &x - d))) * t;
        x = v.map(|e| e.signum() * (e.abs() - t * beta).max(0.0));
    }
    let value = 0.5 * (d_mat * &x - d).norm_squared() + beta * x.iter().map(|e| e.abs()).sum::<f64>();
    (x, value)
}

#[test]
fn lasso_split_matches_proximal_gradient() {
    let d_mat = DMatrix::from_row_slice(
        6,
        4,
        &[
            1.0, 0.2, -0.3, 0.0, 0.4, 1.1, 0.0, 0.5, -0.2, 0.3, 0.9, 0.1, 0.0, -0.6, 0.2, 1.3, 0.7, 0.0, 0.4, -0.5, 0.1,
            0.8, -0.1, 0.2,
        ],
    );
    let d = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5]);
    let beta = 0.8;
    let (_, oracle) = lasso_prox_gradient(&d_mat, &d, beta, 1_000_000);
    let fit = ObjectiveHandle::Quadratic {
        q_mat: d_mat.tr_mul(&d_mat),
        q_vec: -d_mat.tr_mul(&d),
        constant: 0.5 * d.norm_squared(),
    };
    let reg = ObjectiveHandle::L1 { beta, coords: None };
    let p = assemble_problem(
        vec![
            BlockSpec::new(fit, DMatrix::identity(4, 4), LocalSet::Unbounded),
            BlockSpec::new(reg, -DMatrix::identity(4, 4), LocalSet::Unbounded),
        ],
        DVector::zeros(4),
    )
    .unwrap();
    let r = solve_two_block(&p, &tight(Scheme::TwoBlock), None).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    let gap = (final_objective(&r) - oracle).abs();
    assert!(gap <= 1e-5, "gap {gap:e}");
}

#[test]
fn gauss_seidel_three_blocks_matches_kkt() {
    let p = qp(3, 8, 3, 2);
    let r = solve_gauss_seidel(&p, &tight(Scheme::GaussSeidel), None).unwrap();
    assert_matches_kkt(&p, &r, 1e-6);
}

#[test]
fn gauss_seidel_stress_instance_diverges() {
    let p = gauss_seidel_stress();
    let cols: Vec<DVector<f64>> = (0..3).map(|i| p.coupling(i).column(0).into_owned()).collect();
    let radius = gs_map_spectral_radius(&cols, 1.0);
    assert!((radius - 1.0278).abs() < 1e-3, "radius {radius}");
    let x0 = IterateState::with_blocks(&p, vec![DVector::from_element(1, 1.0); 3]).unwrap();
    let r = solve_gauss_seidel(&p, &SolverConfig::new(Scheme::GaussSeidel), Some(x0)).unwrap();
    assert_eq!(r.status, SolveStatus::Diverged);
}

#[test]
fn hand_written_gauss_seidel_map_tracks_the_engine() {
    let p = gauss_seidel_stress();
    let cols: Vec<DVector<f64>> = (0..3).map(|i| p.coupling(i).column(0).into_owned()).collect();
    let x0 = IterateState::with_blocks(&p, vec![DVector::from_element(1, 1.0); 3]).unwrap();
    let r = solve_gauss_seidel(&p, &fixed_iterations(Scheme::GaussSeidel, 40), Some(x0)).unwrap();
    let mut x = vec![1.0; 3];
    let mut lambda = DVector::zeros(3);
    for _ in 0..40 {
        scalar_zero_objective_gs_step(&cols, p.rhs(), 1.0, &mut x, &mut lambda);
    }
    for (i, xi) in x.iter().enumerate() {
        let e = r.final_state.x[i][0];
        assert!((e - xi).abs() <= 1e-9 * (1.0 + xi.abs()), "block {i}: {e} vs {xi}");
    }
    assert!((&r.final_state.lambda - &lambda).amax() <= 1e-9 * (1.0 + lambda.amax()));
}

#[test]
fn jacobi_equals_gauss_seidel_under_orthogonal_couplings() {
    let p = gen_orthogonal_qp(3, 2, 5).unwrap();
    let a = solve_jacobi(&p, &fixed_iterations(Scheme::Jacobi, 200), None).unwrap();
    let b = solve_gauss_seidel(&p, &fixed_iterations(Scheme::GaussSeidel, 200), None).unwrap();
    for (xa, xb) in a.final_state.x.iter().zip(&b.final_state.x) {
        assert!((xa - xb).amax() <= 1e-12);
    }
    let r = solve_jacobi(&p, &tight(Scheme::Jacobi), None).unwrap();
    assert_matches_kkt(&p, &r, 1e-6);
}

#[test]
fn jacobi_fails_on_correlated_pair() {
    let p = correlated_pair();
    let mut cfg = SolverConfig::new(Scheme::Jacobi);
    cfg.max_iter = 5_000;
    let r = solve_jacobi(&p, &cfg, None).unwrap();
    let first = r.trace[1].primal_residual_norm;
    let last = r.final_record().primal_residual_norm;
    assert!(
        r.status == SolveStatus::Diverged || (r.status == SolveStatus::MaxIter && last > first),
        "{} with residual {first:e} -> {last:e}",
        r.status
    );
}

#[test]
fn variable_splitting_three_blocks_matches_kkt() {
    let p = qp(3, 6, 3, 3);
    let r = solve_variable_splitting(&p, &SolverConfig::new(Scheme::VariableSplitting), None).unwrap();
    assert_matches_kkt(&p, &r, 1e-4);
}

fn single_block(a: DMatrix<f64>, c: DVector<f64>) -> ProblemSpec {
    let n = a.ncols();
    let quad = ObjectiveHandle::Quadratic {
        q_mat: DMatrix::identity(n, n),
        q_vec: DVector::zeros(n),
        constant: 0.0,
    };
    assemble_problem(vec![BlockSpec::new(quad, a, LocalSet::Unbounded)], c).unwrap()
}

#[test]
fn variable_splitting_single_block_tracks_attainability() {
    let p = single_block(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), DVector::from_vec(vec![3.0, 1.0]));
    let r = solve_variable_splitting(&p, &tight(Scheme::VariableSplitting), None).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!((&r.final_state.x[0] - DVector::from_vec(vec![2.0, 1.0])).amax() < 1e-6);
    for z in r.final_state.z.as_ref().unwrap() {
        assert_eq!(z.amax(), 0.0);
    }

    let p = single_block(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]), DVector::from_vec(vec![0.0, 1.0]));
    let mut cfg = SolverConfig::new(Scheme::VariableSplitting);
    cfg.max_iter = 2_000;
    let r = solve_variable_splitting(&p, &cfg, None).unwrap();
    assert_ne!(r.status, SolveStatus::Converged);
    assert!(r.final_record().primal_residual_norm > 0.5);
}

#[test]
fn gbs_three_blocks_matches_kkt() {
    let p = qp(3, 7, 3, 4);
    let mut cfg = tight(Scheme::Gbs);
    cfg.alpha = 0.9;
    let r = solve_gbs(&p, &cfg, None).unwrap();
    assert_matches_kkt(&p, &r, 1e-6);
}

#[test]
fn prox_jacobi_three_blocks_matches_kkt() {
    let p = qp(3, 7, 3, 6);
    let r = solve_prox_jacobi(&p, &tight(Scheme::ProxJacobi), None).unwrap();
    assert_matches_kkt(&p, &r, 1e-6);
}

#[test]
fn stress_instance_is_tamed_by_gbs_and_prox_jacobi() {
    let p = gauss_seidel_stress();
    let x0 = IterateState::with_blocks(&p, vec![DVector::from_element(1, 1.0); 3]).unwrap();
    let mut cfg = SolverConfig::new(Scheme::Gbs);
    cfg.alpha = 0.5;
    cfg.max_iter = 50_000;
    let r = solve_gbs(&p, &cfg, Some(x0.clone())).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    let r = solve_prox_jacobi(&p, &SolverConfig::new(Scheme::ProxJacobi), Some(x0.clone())).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    let r = solve_jacobi(&p, &SolverConfig::new(Scheme::Jacobi), Some(x0)).unwrap();
    assert_ne!(r.status, SolveStatus::Converged);
}

#[test]
fn traces_have_increasing_k_and_finite_measures() {
    let p = qp(4, 8, 3, 9);
    for scheme in [Scheme::GaussSeidel, Scheme::VariableSplitting, Scheme::Gbs, Scheme::ProxJacobi] {
        let r = mbadmm::solve(&p, &SolverConfig::new(scheme), None).unwrap();
        assert_eq!(r.trace.len(), r.iterations + 1);
        for w in r.trace.windows(2) {
            assert_eq!(w[1].k, w[0].k + 1);
        }
        for rec in &r.trace {
            assert!(rec.primal_residual_norm.is_finite() && rec.primal_residual_norm >= 0.0);
            assert!(rec.iterate_change.is_finite() && rec.iterate_change >= 0.0);
        }
    }
}
