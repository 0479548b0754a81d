use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reject, GeneratorError};
use crate::problem::{assemble_problem, BlockSpec, LocalSet, ProblemSpec};
use crate::prox::ObjectiveHandle;

/// Phase regularization weight on line terminals. Phases are fixed only up
/// to a common shift by the network equations; this picks the smallest.
const PHASE_WEIGHT: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyOptions {
    pub generators: usize,
    pub loads: usize,
    pub nets: usize,
    pub horizon: usize,
    pub curtailable_loads: usize,
    pub storage_units: usize,
    /// Multiplies every demand profile; 0 gives an idle network.
    pub load_scale: f64,
    /// Lines as `(from, to)` net pairs; a chain closed into a ring (for three
    /// or more nets) when `None`.
    pub lines: Option<Vec<(usize, usize)>>,
    pub seed: u64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self {
            generators: 3,
            loads: 2,
            nets: 2,
            horizon: 4,
            curtailable_loads: 0,
            storage_units: 0,
            load_scale: 1.0,
            lines: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKind {
    /// Injection `p(t) ∈ [0, p_max]`, cost `Σ_t ½a p(t)² + b p(t)`.
    Generator { a: f64, b: f64, p_max: f64 },
    /// Injection pinned at `−demand(t)`.
    FixedLoad { demand: Vec<f64> },
    /// Injection `p(t) ∈ [−demand(t), 0]`, cost `penalty · Σ_t (demand(t) + p(t))`
    /// for unserved energy.
    CurtailableLoad { demand: Vec<f64>, penalty: f64 },
    /// Variables `(p(t), s(t))`: discharge `p ∈ [−rate, rate]`, state of
    /// charge `s ∈ [0, capacity]` with `s(t) = s(t−1) − p(t)`, `s(0) = 0`;
    /// cost `Σ_t ½ wear · p(t)²`.
    Storage { capacity: f64, rate: f64, wear: f64 },
    /// Variables `(f(t), θ_from(t), θ_to(t))`: flow `f ∈ [−limit, limit]` from
    /// the first net to the second with `f = susceptance · (θ_from − θ_to)`;
    /// cost `Σ_t ½ loss · f(t)²` plus a small phase regularizer.
    Line { susceptance: f64, limit: f64, loss: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDevice {
    pub kind: DeviceKind,
    /// Nets of the device terminals (two for lines, one otherwise).
    pub nets: Vec<usize>,
}

/// Network energy management over a horizon. Block `d` is device `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMgmtInstance {
    pub nets: usize,
    pub horizon: usize,
    pub devices: Vec<EnergyDevice>,
    /// Row index of the power balance of net `n` at time `t`:
    /// `balance_rows[n][t]`.
    pub balance_rows: Vec<Vec<usize>>,
}

impl EnergyMgmtInstance {
    /// Net power injected by every device at each net and time step.
    pub fn injections(&self, blocks: &[DVector<f64>]) -> Vec<Vec<f64>> {
        let t_len = self.horizon;
        let mut out = vec![vec![0.0; t_len]; self.nets];
        for (dev, x) in self.devices.iter().zip(blocks) {
            for t in 0..t_len {
                match dev.kind {
                    DeviceKind::Line { .. } => {
                        out[dev.nets[0]][t] -= x[t];
                        out[dev.nets[1]][t] += x[t];
                    }
                    _ => out[dev.nets[0]][t] += x[t],
                }
            }
        }
        out
    }
}

fn profile(rng: &mut ChaCha8Rng, horizon: usize, scale: f64) -> Vec<f64> {
    let base = rng.random_range(0.5..1.5);
    let phase = rng.random_range(0.0..2.0 * PI);
    (0..horizon)
        .map(|t| scale * base * (1.0 + 0.3 * (2.0 * PI * t as f64 / horizon as f64 + phase).sin()))
        .collect()
}

pub fn gen_energy_management(opts: &EnergyOptions) -> Result<(EnergyMgmtInstance, ProblemSpec), GeneratorError> {
    if opts.generators == 0 || opts.nets == 0 || opts.horizon == 0 {
        return reject("generators, nets and horizon must be positive");
    }
    if opts.loads + opts.curtailable_loads == 0 {
        return reject("at least one load is required");
    }
    if !(opts.load_scale >= 0.0) {
        return reject(format!("load_scale must be nonnegative, got {}", opts.load_scale));
    }
    let t_len = opts.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut kinds = Vec::new();
    let fixed: Vec<Vec<f64>> = (0..opts.loads).map(|_| profile(&mut rng, t_len, opts.load_scale)).collect();
    let curtail: Vec<Vec<f64>> = (0..opts.curtailable_loads)
        .map(|_| profile(&mut rng, t_len, opts.load_scale))
        .collect();
    let peak: f64 = (0..t_len)
        .map(|t| fixed.iter().chain(&curtail).map(|d| d[t]).sum::<f64>())
        .fold(0.0, f64::max);
    let p_max = 2.0 * peak.max(1.0) / opts.generators as f64;
    for _ in 0..opts.generators {
        kinds.push(DeviceKind::Generator {
            a: rng.random_range(0.5..2.0),
            b: rng.random_range(0.0..1.0),
            p_max,
        });
    }
    kinds.extend(fixed.into_iter().map(|demand| DeviceKind::FixedLoad { demand }));
    for demand in curtail {
        kinds.push(DeviceKind::CurtailableLoad {
            demand,
            penalty: rng.random_range(5.0..10.0),
        });
    }
    for _ in 0..opts.storage_units {
        kinds.push(DeviceKind::Storage {
            capacity: rng.random_range(0.5..1.5) * peak.max(1.0) / 2.0,
            rate: peak.max(1.0) / 4.0,
            wear: rng.random_range(0.05..0.2),
        });
    }
    let mut devices: Vec<EnergyDevice> = kinds
        .into_iter()
        .enumerate()
        .map(|(k, kind)| EnergyDevice {
            kind,
            nets: vec![k % opts.nets],
        })
        .collect();
    let line_ends = match &opts.lines {
        Some(l) => {
            if let Some(&(a, b)) = l.iter().find(|(a, b)| *a >= opts.nets || *b >= opts.nets || a == b) {
                return reject(format!("line ({a}, {b}) is a self-loop or refers to a missing net"));
            }
            l.clone()
        }
        None => {
            let mut ends: Vec<(usize, usize)> = (0..opts.nets.saturating_sub(1)).map(|n| (n, n + 1)).collect();
            if opts.nets >= 3 {
                ends.push((opts.nets - 1, 0));
            }
            ends
        }
    };
    for (a, b) in line_ends {
        devices.push(EnergyDevice {
            kind: DeviceKind::Line {
                susceptance: rng.random_range(1.0..5.0),
                limit: 2.0 * peak.max(1.0),
                loss: rng.random_range(0.01..0.05),
            },
            nets: vec![a, b],
        });
    }

    let mut terminals = vec![0usize; opts.nets];
    for d in &devices {
        for &n in &d.nets {
            terminals[n] += 1;
        }
    }
    if let Some(n) = terminals.iter().position(|&c| c < 2) {
        return reject(format!("net {n} is dangling: it has {} terminal(s), needs at least 2", terminals[n]));
    }

    // rows: balance per (net, t), then phase consistency, line flow and
    // storage dynamics
    let balance_rows: Vec<Vec<usize>> = (0..opts.nets).map(|n| (0..t_len).map(|t| n * t_len + t).collect()).collect();
    let mut rows = opts.nets * t_len;
    // (device, column offset of its phase variables) per net
    let mut phase_terminals: Vec<Vec<(usize, usize)>> = vec![Vec::new(); opts.nets];
    for (d, dev) in devices.iter().enumerate() {
        if let DeviceKind::Line { .. } = dev.kind {
            phase_terminals[dev.nets[0]].push((d, t_len));
            phase_terminals[dev.nets[1]].push((d, 2 * t_len));
        }
    }
    let phase_row_count: usize = phase_terminals.iter().map(|p| p.len().saturating_sub(1) * t_len).sum();
    let flow_rows_start = rows + phase_row_count;
    let lines = devices.iter().filter(|d| matches!(d.kind, DeviceKind::Line { .. })).count();
    let storage_rows_start = flow_rows_start + lines * t_len;
    let total_rows = storage_rows_start + opts.storage_units * t_len;

    let mut couplings: Vec<DMatrix<f64>> = devices
        .iter()
        .map(|d| {
            let dim = match d.kind {
                DeviceKind::Storage { .. } => 2 * t_len,
                DeviceKind::Line { .. } => 3 * t_len,
                _ => t_len,
            };
            DMatrix::zeros(total_rows, dim)
        })
        .collect();

    for (d, dev) in devices.iter().enumerate() {
        for t in 0..t_len {
            match dev.kind {
                DeviceKind::Line { .. } => {
                    couplings[d][(balance_rows[dev.nets[0]][t], t)] = -1.0;
                    couplings[d][(balance_rows[dev.nets[1]][t], t)] = 1.0;
                }
                _ => couplings[d][(balance_rows[dev.nets[0]][t], t)] = 1.0,
            }
        }
    }
    for terms in &phase_terminals {
        for pair in terms.windows(2) {
            let ((d1, o1), (d2, o2)) = (pair[0], pair[1]);
            for t in 0..t_len {
                couplings[d1][(rows + t, o1 + t)] += 1.0;
                couplings[d2][(rows + t, o2 + t)] -= 1.0;
            }
            rows += t_len;
        }
    }
    let (mut line_k, mut storage_k) = (0, 0);
    for (d, dev) in devices.iter().enumerate() {
        match dev.kind {
            DeviceKind::Line { susceptance, .. } => {
                for t in 0..t_len {
                    let r = flow_rows_start + line_k * t_len + t;
                    couplings[d][(r, t)] = 1.0;
                    couplings[d][(r, t_len + t)] = -susceptance;
                    couplings[d][(r, 2 * t_len + t)] = susceptance;
                }
                line_k += 1;
            }
            DeviceKind::Storage { .. } => {
                for t in 0..t_len {
                    let r = storage_rows_start + storage_k * t_len + t;
                    couplings[d][(r, t)] = 1.0;
                    couplings[d][(r, t_len + t)] = 1.0;
                    if t > 0 {
                        couplings[d][(r, t_len + t - 1)] = -1.0;
                    }
                }
                storage_k += 1;
            }
            _ => {}
        }
    }

    let diag = |v: Vec<f64>| DMatrix::from_diagonal(&DVector::from_vec(v));
    let blocks = devices
        .iter()
        .zip(couplings)
        .map(|(dev, a)| {
            let (objective, set) = match &dev.kind {
                DeviceKind::Generator { a, b, p_max } => (
                    ObjectiveHandle::Quadratic {
                        q_mat: DMatrix::identity(t_len, t_len) * *a,
                        q_vec: DVector::from_element(t_len, *b),
                        constant: 0.0,
                    },
                    LocalSet::boxed(vec![0.0; t_len], vec![*p_max; t_len]),
                ),
                DeviceKind::FixedLoad { demand } => (
                    ObjectiveHandle::Zero,
                    LocalSet::boxed(demand.iter().map(|d| -d).collect(), demand.iter().map(|d| -d).collect()),
                ),
                DeviceKind::CurtailableLoad { demand, penalty } => (
                    ObjectiveHandle::Quadratic {
                        q_mat: DMatrix::zeros(t_len, t_len),
                        q_vec: DVector::from_element(t_len, *penalty),
                        constant: penalty * demand.iter().sum::<f64>(),
                    },
                    LocalSet::boxed(demand.iter().map(|d| -d).collect(), vec![0.0; t_len]),
                ),
                DeviceKind::Storage { capacity, rate, wear } => {
                    let mut w = vec![*wear; t_len];
                    w.extend(vec![0.0; t_len]);
                    let mut lo = vec![-rate; t_len];
                    lo.extend(vec![0.0; t_len]);
                    let mut hi = vec![*rate; t_len];
                    hi.extend(vec![*capacity; t_len]);
                    (
                        ObjectiveHandle::Quadratic {
                            q_mat: diag(w),
                            q_vec: DVector::zeros(2 * t_len),
                            constant: 0.0,
                        },
                        LocalSet::boxed(lo, hi),
                    )
                }
                DeviceKind::Line { limit, loss, .. } => {
                    let mut w = vec![*loss; t_len];
                    w.extend(vec![PHASE_WEIGHT; 2 * t_len]);
                    let mut lo = vec![-limit; t_len];
                    lo.extend(vec![f64::NEG_INFINITY; 2 * t_len]);
                    let mut hi = vec![*limit; t_len];
                    hi.extend(vec![f64::INFINITY; 2 * t_len]);
                    (
                        ObjectiveHandle::Quadratic {
                            q_mat: diag(w),
                            q_vec: DVector::zeros(3 * t_len),
                            constant: 0.0,
                        },
                        LocalSet::boxed(lo, hi),
                    )
                }
            };
            BlockSpec::new(objective, a, set)
        })
        .collect();
    let problem = assemble_problem(blocks, DVector::zeros(total_rows)).expect("generated blocks are conforming");
    Ok((
        EnergyMgmtInstance {
            nets: opts.nets,
            horizon: t_len,
            devices,
            balance_rows,
        },
        problem,
    ))
}
