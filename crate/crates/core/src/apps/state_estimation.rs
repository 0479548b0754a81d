use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{reject, GeneratorError};
use crate::problem::{assemble_problem, BlockSpec, LocalSet, ProblemSpec};
use crate::prox::ObjectiveHandle;

#[derive(Debug, Clone, PartialEq)]
pub struct StateEstOptions {
    pub areas: usize,
    /// States private to each area.
    pub interior: usize,
    /// States shared across each edge of the topology.
    pub boundary_size: usize,
    /// Area adjacency as undirected edges; a chain `0-1-…-(N−1)` when `None`.
    pub edges: Option<Vec<(usize, usize)>>,
    /// Measurements per local state.
    pub redundancy: usize,
    /// Total number of attacked measurements across all areas.
    pub attack_cardinality: usize,
    pub beta: f64,
    /// Noise standard deviation; `0.01 ×` signal scale when `None`.
    pub noise_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for StateEstOptions {
    fn default() -> Self {
        Self {
            areas: 3,
            interior: 3,
            boundary_size: 2,
            edges: None,
            redundancy: 2,
            attack_cardinality: 2,
            beta: 1.0,
            noise_sigma: None,
            seed: 0,
        }
    }
}

/// Multi-area state estimation with sparse attacks.
///
/// Block `i` stacks the local state `x_i` (length `n_i`) and the attack
/// estimate `o_i` (one entry per measurement), with
/// `f_i = ½‖m_i − J_i x_i − o_i‖² + β‖o_i‖₁`. Shared states of adjacent areas
/// are tied by consensus rows with one `+1` and one `−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstInstance {
    pub areas: usize,
    pub edges: Vec<(usize, usize)>,
    /// Neighbor sets `N_i`.
    pub neighbors: Vec<Vec<usize>>,
    /// For each edge `(i, j)`, pairs `(position in x_i, position in x_j)` of
    /// the shared states.
    pub shared: Vec<Vec<(usize, usize)>>,
    /// Global state index of every local state, per area.
    pub state_index: Vec<Vec<usize>>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub true_states: Vec<DVector<f64>>,
    pub attacks: Vec<DVector<f64>>,
    pub attack_support: Vec<Vec<usize>>,
    pub beta: f64,
    pub noise_sigma: f64,
    /// RMS of the noiseless measurements.
    pub signal_scale: f64,
}

impl StateEstInstance {
    pub fn state_dim(&self, area: usize) -> usize {
        self.state_index[area].len()
    }

    /// Splits a block vector into `(x_i, o_i)`.
    pub fn split(&self, area: usize, block: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.state_dim(area);
        (block.rows(0, n).into_owned(), block.rows(n, block.len() - n).into_owned())
    }
}

fn check_edges(areas: usize, edges: &[(usize, usize)]) -> Result<(), GeneratorError> {
    let mut seen = BTreeSet::new();
    for &(a, b) in edges {
        if a >= areas || b >= areas {
            return reject(format!("edge ({a}, {b}) refers to a missing area (areas = {areas})"));
        }
        if a == b {
            return reject(format!("edge ({a}, {a}) is a self-loop"));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return reject(format!("edge ({a}, {b}) listed twice"));
        }
    }
    Ok(())
}

pub fn gen_state_estimation(opts: &StateEstOptions) -> Result<(StateEstInstance, ProblemSpec), GeneratorError> {
    if opts.areas < 2 {
        return reject("state estimation needs at least 2 areas");
    }
    if opts.boundary_size == 0 {
        return reject("boundary_size must be positive: adjacent areas must share at least one state");
    }
    if opts.redundancy == 0 {
        return reject("redundancy must be positive");
    }
    if !(opts.beta >= 0.0) {
        return reject(format!("beta must be nonnegative, got {}", opts.beta));
    }
    let edges = opts
        .edges
        .clone()
        .unwrap_or_else(|| (0..opts.areas - 1).map(|i| (i, i + 1)).collect());
    check_edges(opts.areas, &edges)?;

    // global numbering: interior states per area, then shared states per edge
    let mut state_index: Vec<Vec<usize>> = (0..opts.areas)
        .map(|i| (i * opts.interior..(i + 1) * opts.interior).collect())
        .collect();
    let mut next = opts.areas * opts.interior;
    let mut shared = Vec::with_capacity(edges.len());
    for &(a, b) in &edges {
        let mut pairs = Vec::with_capacity(opts.boundary_size);
        for _ in 0..opts.boundary_size {
            pairs.push((state_index[a].len(), state_index[b].len()));
            state_index[a].push(next);
            state_index[b].push(next);
            next += 1;
        }
        shared.push(pairs);
    }
    if let Some(lonely) = state_index.iter().position(|s| s.is_empty()) {
        return reject(format!("area {lonely} has no states: give it interior states or an edge"));
    }
    let mut neighbors = vec![Vec::new(); opts.areas];
    for &(a, b) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let truth_global: Vec<f64> = (0..next).map(|_| rng.sample(StandardNormal)).collect();
    let true_states: Vec<DVector<f64>> = state_index
        .iter()
        .map(|idx| DVector::from_iterator(idx.len(), idx.iter().map(|&g| truth_global[g])))
        .collect();
    let jacobians: Vec<DMatrix<f64>> = true_states
        .iter()
        .map(|x| {
            let n = x.len();
            let meas = opts.redundancy * n;
            // identity on top keeps J_i well conditioned
            let mut j = DMatrix::from_fn(meas, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5);
            for d in 0..n {
                j[(d, d)] += 1.0;
            }
            j
        })
        .collect();
    let clean: Vec<DVector<f64>> = jacobians.iter().zip(&true_states).map(|(j, x)| j * x).collect();
    let total_meas: usize = clean.iter().map(|v| v.len()).sum();
    let signal_scale = (clean.iter().map(|v| v.norm_squared()).sum::<f64>() / total_meas as f64).sqrt();
    let noise_sigma = opts.noise_sigma.unwrap_or(0.01 * signal_scale);
    if !(noise_sigma >= 0.0) {
        return reject(format!("noise_sigma must be nonnegative, got {noise_sigma}"));
    }
    if opts.attack_cardinality > total_meas {
        return reject(format!(
            "attack_cardinality {} exceeds the {total_meas} measurements",
            opts.attack_cardinality
        ));
    }

    let mut attacks: Vec<DVector<f64>> = clean.iter().map(|v| DVector::zeros(v.len())).collect();
    let mut attack_support = vec![Vec::new(); opts.areas];
    let mut picked = sample(&mut rng, total_meas, opts.attack_cardinality).into_vec();
    picked.sort_unstable();
    for flat in picked {
        let (mut area, mut pos) = (0, flat);
        while pos >= attacks[area].len() {
            pos -= attacks[area].len();
            area += 1;
        }
        let magnitude = rng.random_range(1.0..=2.0) * signal_scale;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        attacks[area][pos] = sign * magnitude;
        attack_support[area].push(pos);
    }
    let measurements: Vec<DVector<f64>> = clean
        .iter()
        .zip(&attacks)
        .map(|(c, o)| {
            let noise = DVector::from_fn(c.len(), |_, _| rng.sample::<f64, _>(StandardNormal) * noise_sigma);
            c + o + noise
        })
        .collect();

    let rows: usize = shared.iter().map(Vec::len).sum();
    let mut couplings: Vec<DMatrix<f64>> = (0..opts.areas)
        .map(|i| DMatrix::zeros(rows, state_index[i].len() + measurements[i].len()))
        .collect();
    let mut r = 0;
    for (e, &(a, b)) in edges.iter().enumerate() {
        for &(pa, pb) in &shared[e] {
            couplings[a][(r, pa)] = 1.0;
            couplings[b][(r, pb)] = -1.0;
            r += 1;
        }
    }
    let blocks = (0..opts.areas)
        .map(|i| {
            let n = state_index[i].len();
            let meas = measurements[i].len();
            // G = [J I], f = ½‖m − Gu‖² = ½uᵀGᵀGu − (Gᵀm)ᵀu + ½‖m‖²
            let mut g = DMatrix::zeros(meas, n + meas);
            g.view_mut((0, 0), (meas, n)).copy_from(&jacobians[i]);
            g.view_mut((0, n), (meas, meas)).fill_with_identity();
            let quad = ObjectiveHandle::Quadratic {
                q_mat: g.tr_mul(&g),
                q_vec: -g.tr_mul(&measurements[i]),
                constant: 0.5 * measurements[i].norm_squared(),
            };
            let objective = if opts.beta > 0.0 {
                ObjectiveHandle::Sum(vec![
                    quad,
                    ObjectiveHandle::L1 {
                        beta: opts.beta,
                        coords: Some((n..n + meas).collect()),
                    },
                ])
            } else {
                quad
            };
            BlockSpec::new(objective, couplings[i].clone(), LocalSet::Unbounded)
        })
        .collect();
    let problem = assemble_problem(blocks, DVector::zeros(rows)).expect("generated blocks are conforming");
    let instance = StateEstInstance {
        areas: opts.areas,
        edges,
        neighbors,
        shared,
        state_index,
        jacobians,
        measurements,
        true_states,
        attacks,
        attack_support,
        beta: opts.beta,
        noise_sigma,
        signal_scale,
    };
    Ok((instance, problem))
}

/// Attack entries with `|o_j| > threshold`, per area.
pub fn estimated_support(instance: &StateEstInstance, blocks: &[DVector<f64>], threshold: f64) -> Vec<Vec<usize>> {
    (0..instance.areas)
        .map(|i| {
            let (_, o) = instance.split(i, &blocks[i]);
            o.iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > threshold)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}
