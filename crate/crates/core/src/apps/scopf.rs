use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reject, GeneratorError};
use crate::problem::{assemble_problem, BlockSpec, LocalSet, ProblemSpec};
use crate::prox::ObjectiveHandle;

#[derive(Debug, Clone, PartialEq)]
pub struct ScopfOptions {
    pub buses: usize,
    pub contingencies: usize,
    /// Ramp bound `Δ_c` shared by every contingency; may be 0 or infinite.
    pub ramp_limit: f64,
    /// Branch rating as a fraction of total demand.
    pub rating_factor: f64,
    /// Explicit network; a ring with `buses / 2` random chords when `None`.
    pub branches: Option<Vec<(usize, usize)>>,
    /// Explicit outaged branch per contingency; random when `None`.
    pub outages: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for ScopfOptions {
    fn default() -> Self {
        Self {
            buses: 5,
            contingencies: 2,
            ramp_limit: 0.2,
            rating_factor: 0.3,
            branches: None,
            outages: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub rating: f64,
}

/// Security-constrained DC optimal power flow.
///
/// Block 0 is the base case and block `c` (1..=C) the post-contingency case
/// `c`; each holds `(θ, u, f)`: bus angles without the reference bus 0, one
/// generator per bus, and branch flows of the branches in service. The base
/// case carries the generation cost; contingency cases carry only bounds.
/// Blocks `C+1..=2C` are ramp slacks `s_c ∈ [−Δ_c, Δ_c]^buses` entering the
/// rows `u⁰ − u^c + s_c = 0`. DC power balance and flow definitions are rows
/// that touch a single block.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopfInstance {
    pub buses: usize,
    pub branches: Vec<Branch>,
    pub outages: Vec<usize>,
    pub demand: Vec<f64>,
    /// Generation cost `½a u² + b u` per bus: `(a, b)`.
    pub costs: Vec<(f64, f64)>,
    pub u_max: Vec<f64>,
    pub ramp_limits: Vec<f64>,
}

impl ScopfInstance {
    pub fn contingencies(&self) -> usize {
        self.outages.len()
    }

    /// Position of the generation vector inside a case block.
    pub fn u_range(&self) -> Range<usize> {
        self.buses - 1..2 * self.buses - 1
    }

    /// Branches in service in case `s` (0 = base).
    pub fn in_service(&self, s: usize) -> Vec<usize> {
        (0..self.branches.len()).filter(|&l| s == 0 || l != self.outages[s - 1]).collect()
    }

    pub fn generation(&self, blocks: &[DVector<f64>], s: usize) -> DVector<f64> {
        blocks[s].rows_range(self.u_range()).into_owned()
    }
}

fn connected(buses: usize, branches: &[(usize, usize)], skip: Option<usize>) -> bool {
    let mut parent: Vec<usize> = (0..buses).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut parts = buses;
    for (l, &(a, b)) in branches.iter().enumerate() {
        if Some(l) == skip {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            parts -= 1;
        }
    }
    parts == 1
}

pub fn gen_scopf_qp(opts: &ScopfOptions) -> Result<(ScopfInstance, ProblemSpec), GeneratorError> {
    let n = opts.buses;
    if n < 3 {
        return reject("scopf needs at least 3 buses");
    }
    if !(opts.ramp_limit >= 0.0) {
        return reject(format!("ramp_limit must be nonnegative, got {}", opts.ramp_limit));
    }
    if !(opts.rating_factor > 0.0) {
        return reject(format!("rating_factor must be positive, got {}", opts.rating_factor));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let ends: Vec<(usize, usize)> = match &opts.branches {
        Some(b) => {
            if let Some(&(a, c)) = b.iter().find(|(a, c)| *a >= n || *c >= n || a == c) {
                return reject(format!("branch ({a}, {c}) is a self-loop or refers to a missing bus"));
            }
            b.clone()
        }
        None => {
            let mut ends: Vec<(usize, usize)> = (0..n).map(|k| (k, (k + 1) % n)).collect();
            let mut chords: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 2..n).map(move |b| (a, b)))
                .filter(|&(a, b)| !(a == 0 && b == n - 1))
                .collect();
            chords.shuffle(&mut rng);
            ends.extend(chords.into_iter().take(n / 2));
            ends
        }
    };
    if !connected(n, &ends, None) {
        return reject("base network is not connected");
    }
    let spare = ends.len() - (n - 1);
    if opts.contingencies > spare {
        return reject(format!(
            "{} contingencies requested but only {spare} branches lie outside a spanning tree",
            opts.contingencies
        ));
    }
    let outages = match &opts.outages {
        Some(o) => {
            if o.len() != opts.contingencies {
                return reject(format!("{} outages listed for {} contingencies", o.len(), opts.contingencies));
            }
            o.clone()
        }
        None => {
            let mut candidates: Vec<usize> = (0..ends.len()).filter(|&l| connected(n, &ends, Some(l))).collect();
            candidates.shuffle(&mut rng);
            if candidates.len() < opts.contingencies {
                return reject("not enough non-bridge branches for the requested contingencies");
            }
            candidates.truncate(opts.contingencies);
            candidates
        }
    };
    for &l in &outages {
        if l >= ends.len() {
            return reject(format!("outage refers to missing branch {l}"));
        }
        if !connected(n, &ends, Some(l)) {
            return reject(format!("outage of branch {l} {:?} disconnects the network", ends[l]));
        }
    }

    let demand: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = demand.iter().sum();
    let costs: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.05..0.5), rng.random_range(1.0..10.0)))
        .collect();
    // every bus can cover its own demand, so zero flows are always feasible
    let u_max: Vec<f64> = demand
        .iter()
        .map(|d| d + rng.random_range(0.5..2.0) * total / n as f64)
        .collect();
    let branches: Vec<Branch> = ends
        .iter()
        .map(|&(from, to)| Branch {
            from,
            to,
            susceptance: rng.random_range(2.0..10.0),
            rating: opts.rating_factor * total,
        })
        .collect();
    let instance = ScopfInstance {
        buses: n,
        branches,
        outages,
        demand,
        costs,
        u_max,
        ramp_limits: vec![opts.ramp_limit; opts.contingencies],
    };
    let problem = assemble(&instance);
    Ok((instance, problem))
}

fn assemble(inst: &ScopfInstance) -> ProblemSpec {
    let n = inst.buses;
    let cases = inst.contingencies() + 1;
    let service: Vec<Vec<usize>> = (0..cases).map(|s| inst.in_service(s)).collect();
    let case_rows: Vec<usize> = service.iter().map(|sv| n + sv.len()).collect();
    let ramp_start: usize = case_rows.iter().sum();
    let total_rows = ramp_start + n * inst.contingencies();

    let mut rhs = DVector::zeros(total_rows);
    let mut blocks = Vec::with_capacity(2 * cases - 1);
    let mut row0 = 0;
    for s in 0..cases {
        let lines = &service[s];
        let dim = (n - 1) + n + lines.len();
        let (u0, f0) = (n - 1, 2 * n - 1);
        let mut a = DMatrix::zeros(total_rows, dim);
        for k in 0..n {
            a[(row0 + k, u0 + k)] = 1.0;
            rhs[row0 + k] = inst.demand[k];
        }
        for (j, &l) in lines.iter().enumerate() {
            let br = inst.branches[l];
            a[(row0 + br.from, f0 + j)] -= 1.0;
            a[(row0 + br.to, f0 + j)] += 1.0;
            let r = row0 + n + j;
            a[(r, f0 + j)] = 1.0;
            // θ of the reference bus 0 is fixed at zero and has no column
            if br.from > 0 {
                a[(r, br.from - 1)] -= br.susceptance;
            }
            if br.to > 0 {
                a[(r, br.to - 1)] += br.susceptance;
            }
        }
        for c in 1..cases {
            let r = ramp_start + (c - 1) * n;
            let sign = if s == 0 {
                1.0
            } else if s == c {
                -1.0
            } else {
                0.0
            };
            if sign != 0.0 {
                for k in 0..n {
                    a[(r + k, u0 + k)] = sign;
                }
            }
        }
        let mut lo = vec![f64::NEG_INFINITY; n - 1];
        let mut hi = vec![f64::INFINITY; n - 1];
        lo.extend(vec![0.0; n]);
        hi.extend(inst.u_max.iter().copied());
        lo.extend(lines.iter().map(|&l| -inst.branches[l].rating));
        hi.extend(lines.iter().map(|&l| inst.branches[l].rating));
        let objective = if s == 0 {
            let mut q = DMatrix::zeros(dim, dim);
            let mut v = DVector::zeros(dim);
            for (k, &(ca, cb)) in inst.costs.iter().enumerate() {
                q[(u0 + k, u0 + k)] = ca;
                v[u0 + k] = cb;
            }
            ObjectiveHandle::Quadratic {
                q_mat: q,
                q_vec: v,
                constant: 0.0,
            }
        } else {
            ObjectiveHandle::Zero
        };
        blocks.push(BlockSpec::new(objective, a, LocalSet::boxed(lo, hi)));
        row0 += case_rows[s];
    }
    for c in 1..cases {
        let mut a = DMatrix::zeros(total_rows, n);
        let r = ramp_start + (c - 1) * n;
        a.view_mut((r, 0), (n, n)).fill_with_identity();
        let d = inst.ramp_limits[c - 1];
        blocks.push(BlockSpec::new(ObjectiveHandle::Zero, a, LocalSet::boxed(vec![-d; n], vec![d; n])));
    }
    assemble_problem(blocks, rhs).expect("generated blocks are conforming")
}
