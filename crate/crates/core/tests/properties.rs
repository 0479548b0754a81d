mod common;

use std::time::Instant;

use common::naive_residual;
use mbadmm::apps::{
    gen_energy_management, gen_random_qp, gen_scopf_qp, gen_state_estimation, EnergyOptions, QpOptions, ScopfOptions,
    StateEstOptions,
};
use mbadmm::io::{problem_from_json, problem_to_json};
use mbadmm::{
    assemble_problem, compute_diagnostics, eval_augmented_lagrangian, eval_objective, DVector, IterateState,
    ProblemSpec,
};
use proptest::prelude::*;

fn vector(len: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0..3.0f64, len).prop_map(DVector::from_vec)
}

fn random_instance() -> impl Strategy<Value = ProblemSpec> {
    (1usize..5, 1usize..7, 1usize..5, any::<u64>()).prop_map(|(blocks, rows, dim, seed)| {
        gen_random_qp(&QpOptions {
            blocks,
            rows,
            max_block_dim: dim,
            seed,
        })
        .unwrap()
    })
}

fn instance_and_point() -> impl Strategy<Value = (ProblemSpec, Vec<DVector<f64>>, DVector<f64>)> {
    random_instance().prop_flat_map(|p| {
        let xs: Vec<_> = p.block_dims().into_iter().map(vector).collect();
        let lambda = vector(p.rows());
        (Just(p), xs, lambda)
    })
}

/// Term-by-term recomputation of `f(x) − λᵀr + (ρ/2)‖r‖²`.
fn naive_lagrangian(p: &ProblemSpec, x: &[DVector<f64>], lambda: &DVector<f64>, rho: f64) -> f64 {
    let r = naive_residual(p, x);
    let mut total = eval_objective(p, x).unwrap().as_f64();
    for j in 0..r.len() {
        total += -lambda[j] * r[j] + 0.5 * rho * r[j] * r[j];
    }
    total
}

/// Moves the last block so that `Σ A_i x_i = c` holds, when the last
/// coupling has full row rank.
fn make_feasible(p: &ProblemSpec, x: &mut [DVector<f64>]) -> bool {
    let last = x.len() - 1;
    let a = p.coupling(last);
    if a.ncols() < a.nrows() {
        return false;
    }
    let r = naive_residual(p, x);
    let aat = a * a.transpose();
    let Some(chol) = aat.cholesky() else {
        return false;
    };
    x[last] -= a.transpose() * chol.solve(&r);
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lagrangian_matches_term_by_term((p, x, lambda) in instance_and_point(), rho in 0.1..10.0f64) {
        let state = IterateState { lambda: lambda.clone(), ..IterateState::with_blocks(&p, x.clone()).unwrap() };
        let value = eval_augmented_lagrangian(&p, &state, rho).unwrap().as_f64();
        let naive = naive_lagrangian(&p, &x, &lambda, rho);
        prop_assert!((value - naive).abs() <= 1e-10 * (1.0 + naive.abs()));
    }

    #[test]
    fn lagrangian_equals_objective_on_feasible_points((p, mut x, lambda) in instance_and_point(), rho in 0.1..10.0f64) {
        prop_assume!(make_feasible(&p, &mut x));
        let state = IterateState { lambda, ..IterateState::with_blocks(&p, x.clone()).unwrap() };
        let al = eval_augmented_lagrangian(&p, &state, rho).unwrap().as_f64();
        let obj = eval_objective(&p, &x).unwrap().as_f64();
        prop_assert!((al - obj).abs() <= 1e-8 * (1.0 + obj.abs()), "{al} vs {obj}");
    }

    #[test]
    fn lagrangian_shift_in_multiplier((p, x, lambda) in instance_and_point(), rho in 0.1..10.0f64, seed in any::<u64>()) {
        let delta = DVector::from_fn(p.rows(), |j, _| ((seed >> (j % 60)) & 7) as f64 - 3.5);
        let base = IterateState { lambda: lambda.clone(), ..IterateState::with_blocks(&p, x.clone()).unwrap() };
        let shifted = IterateState { lambda: &lambda + &delta, ..base.clone() };
        let noop = IterateState { lambda: &lambda + DVector::zeros(p.rows()) * rho, ..base.clone() };
        let a = eval_augmented_lagrangian(&p, &base, rho).unwrap().as_f64();
        let b = eval_augmented_lagrangian(&p, &shifted, rho).unwrap().as_f64();
        let c = eval_augmented_lagrangian(&p, &noop, rho).unwrap().as_f64();
        prop_assert_eq!(a.to_bits(), c.to_bits());
        let expected = -delta.dot(&naive_residual(&p, &x));
        prop_assert!((b - a - expected).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn diagnostics_match_naive_recomputation((p, x, _l) in instance_and_point(), shift in -1.0..1.0f64) {
        let prev = IterateState::with_blocks(&p, x.clone()).unwrap();
        let moved: Vec<_> = x.iter().enumerate().map(|(i, v)| v.add_scalar(shift * (i + 1) as f64)).collect();
        let curr = IterateState::with_blocks(&p, moved.clone()).unwrap();
        let t0 = Instant::now();
        let d = compute_diagnostics(&p, &prev, &curr, t0).unwrap();
        let again = compute_diagnostics(&p, &prev, &curr, t0).unwrap();
        let r = naive_residual(&p, &moved);
        prop_assert!((d.primal_residual_norm - r.norm()).abs() <= 1e-12 * (1.0 + r.norm()));
        let change = x.iter().zip(&moved).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!((d.iterate_change - change).abs() <= 1e-12 * (1.0 + change));
        prop_assert_eq!(d.objective, again.objective);
        prop_assert_eq!(d.primal_residual_norm.to_bits(), again.primal_residual_norm.to_bits());
        prop_assert_eq!(d.iterate_change.to_bits(), again.iterate_change.to_bits());
        let same = compute_diagnostics(&p, &prev, &prev, t0).unwrap();
        prop_assert_eq!(same.iterate_change, 0.0);
    }
}

fn round_trips(p: &ProblemSpec) -> Result<(), TestCaseError> {
    let again = assemble_problem(p.blocks().to_vec(), p.rhs().clone());
    prop_assert!(again.is_ok());
    let parsed = problem_from_json(&problem_to_json(p));
    prop_assert!(parsed.is_ok());
    let parsed = parsed.unwrap();
    prop_assert_eq!(parsed.blocks(), p.blocks());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn state_estimation_instances_validate(areas in 2usize..5, boundary in 1usize..3, attacks in 0usize..4, seed in any::<u64>()) {
        let opts = StateEstOptions { areas, boundary_size: boundary, attack_cardinality: attacks, seed, ..Default::default() };
        let (inst, p) = gen_state_estimation(&opts).unwrap();
        round_trips(&p)?;
        let (again, q) = gen_state_estimation(&opts).unwrap();
        prop_assert_eq!(q.blocks(), p.blocks());
        prop_assert_eq!(&again.measurements, &inst.measurements);
        prop_assert!(inst.attack_support.iter().map(Vec::len).sum::<usize>() <= attacks);
        for r in 0..p.rows() {
            let nz: Vec<f64> = (0..p.num_blocks())
                .flat_map(|i| p.coupling(i).row(r).iter().copied().filter(|v| *v != 0.0).collect::<Vec<_>>())
                .collect();
            prop_assert_eq!(nz.len(), 2);
            prop_assert_eq!(nz.iter().sum::<f64>(), 0.0);
            prop_assert_eq!(p.rhs()[r], 0.0);
        }
        // area graph induced by the coupling rows is connected
        let mut reached = vec![false; areas];
        reached[0] = true;
        for _ in 0..areas {
            for r in 0..p.rows() {
                let touched: Vec<usize> = (0..areas).filter(|&i| p.coupling(i).row(r).iter().any(|v| *v != 0.0)).collect();
                if touched.iter().any(|&i| reached[i]) {
                    for &i in &touched {
                        reached[i] = true;
                    }
                }
            }
        }
        prop_assert!(reached.iter().all(|&b| b));
    }

    #[test]
    fn energy_instances_validate(generators in 1usize..4, loads in 1usize..4, nets in 1usize..4, horizon in 1usize..4, seed in any::<u64>()) {
        let opts = EnergyOptions { generators, loads, nets, horizon, seed, ..Default::default() };
        let (_, p) = gen_energy_management(&opts).unwrap();
        round_trips(&p)?;
        let (_, q) = gen_energy_management(&opts).unwrap();
        prop_assert_eq!(q.blocks(), p.blocks());
    }

    #[test]
    fn scopf_instances_validate(buses in 3usize..8, contingencies in 0usize..3, seed in any::<u64>()) {
        let opts = ScopfOptions { buses, contingencies, seed, ..Default::default() };
        match gen_scopf_qp(&opts) {
            Ok((_, p)) => {
                round_trips(&p)?;
                let (_, q) = gen_scopf_qp(&opts).unwrap();
                prop_assert_eq!(q.blocks(), p.blocks());
            }
            // more contingencies than non-bridge branches
            Err(e) => prop_assert!(e.0.contains("contingenc") || e.0.contains("disconnect"), "{}", e.0),
        }
    }

    #[test]
    fn random_qp_instances_validate(p in random_instance()) {
        round_trips(&p)?;
    }
}
