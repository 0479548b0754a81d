//! Fixed instances shared by the benchmarks.

use mbadmm::apps::{gen_energy_management, gen_random_qp, gen_scopf_qp, gen_state_estimation, EnergyOptions, QpOptions, ScopfOptions, StateEstOptions};
use mbadmm::ProblemSpec;

pub struct Fixture {
    pub name: &'static str,
    pub problem: ProblemSpec,
}

pub fn fixtures() -> Vec<Fixture> {
    let qp = gen_random_qp(&QpOptions {
        blocks: 5,
        rows: 15,
        max_block_dim: 10,
        seed: 17,
    })
    .expect("valid options");
    let (_, se) = gen_state_estimation(&StateEstOptions {
        areas: 4,
        seed: 3,
        ..Default::default()
    })
    .expect("valid options");
    let (_, energy) = gen_energy_management(&EnergyOptions {
        generators: 4,
        loads: 3,
        nets: 3,
        horizon: 6,
        seed: 5,
        ..Default::default()
    })
    .expect("valid options");
    let (_, scopf) = gen_scopf_qp(&ScopfOptions {
        buses: 6,
        contingencies: 2,
        seed: 5,
        ..Default::default()
    })
    .expect("valid options");
    vec![
        Fixture { name: "random_qp", problem: qp },
        Fixture { name: "state_estimation", problem: se },
        Fixture { name: "energy_management", problem: energy },
        Fixture { name: "scopf", problem: scopf },
    ]
}
