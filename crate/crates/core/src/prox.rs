//! Proximal operators, projections and block subproblem solvers.
//!
//! Every scheme reduces its block update to
//!
//! ```text
//!   minimize  ½ uᵀ H u + bᵀ u + f(u)   over u ∈ X
//! ```
//!
//! where `H` collects the penalty curvature (`ρ A_iᵀ A_i`, plus any proximal
//! term) and `b` the linearized coupling. [`PreparedSubproblem`] factors `H`
//! once and is then reused with a new `b` every iteration.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::ProxError;
use crate::problem::{LocalSet, ObjectiveValue};

/// Per-block objective `f_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveHandle {
    Zero,
    /// `½ uᵀ Q u + qᵀ u + constant` with `Q` symmetric PSD.
    Quadratic {
        q_mat: DMatrix<f64>,
        q_vec: DVector<f64>,
        constant: f64,
    },
    /// `beta · Σ_{j ∈ coords} |u_j|`; all coordinates when `coords` is `None`.
    L1 { beta: f64, coords: Option<Vec<usize>> },
    /// Indicator of a local set, intersected with the block's own `X_i`.
    Indicator(LocalSet),
    Sum(Vec<ObjectiveHandle>),
}

const SYMMETRY_TOL: f64 = 1e-10;

/// Objective and local set of one block, flattened into quadratic + weighted
/// l1 + box form.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    pub quad: Option<DMatrix<f64>>,
    pub linear: DVector<f64>,
    pub constant: f64,
    /// Per-coordinate l1 weights (zero where no l1 term applies).
    pub l1: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl BlockModel {
    pub fn build(handle: &ObjectiveHandle, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, String> {
        let n = lo.len();
        let mut model = BlockModel {
            quad: None,
            linear: DVector::zeros(n),
            constant: 0.0,
            l1: DVector::zeros(n),
            lo,
            hi,
        };
        model.absorb(handle)?;
        Ok(model)
    }

    fn absorb(&mut self, handle: &ObjectiveHandle) -> Result<(), String> {
        let n = self.dim();
        match handle {
            ObjectiveHandle::Zero => {}
            ObjectiveHandle::Quadratic {
                q_mat,
                q_vec,
                constant,
            } => {
                if q_mat.shape() != (n, n) || q_vec.len() != n {
                    return Err(format!(
                        "quadratic term has shape {:?} / {} for dimension {n}",
                        q_mat.shape(),
                        q_vec.len()
                    ));
                }
                check_symmetric_psd(q_mat).map_err(|e| format!("quadratic term: {e}"))?;
                match &mut self.quad {
                    Some(q) => *q += q_mat,
                    None => self.quad = Some(q_mat.clone()),
                }
                self.linear += q_vec;
                self.constant += constant;
            }
            ObjectiveHandle::L1 { beta, coords } => {
                if !(*beta >= 0.0) || !beta.is_finite() {
                    return Err(format!("l1 weight must be finite and nonnegative, got {beta}"));
                }
                match coords {
                    None => self.l1.add_scalar_mut(*beta),
                    Some(cs) => {
                        for &j in cs {
                            if j >= n {
                                return Err(format!("l1 coordinate {j} out of range for dimension {n}"));
                            }
                            self.l1[j] += beta;
                        }
                    }
                }
            }
            ObjectiveHandle::Indicator(set) => {
                let (lo, hi) = set.bounds(n)?;
                for j in 0..n {
                    self.lo[j] = self.lo[j].max(lo[j]);
                    self.hi[j] = self.hi[j].min(hi[j]);
                    if self.lo[j] > self.hi[j] {
                        return Err(format!("indicator leaves coordinate {j} with an empty range"));
                    }
                }
            }
            ObjectiveHandle::Sum(terms) => {
                for t in terms {
                    self.absorb(t)?;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn has_l1(&self) -> bool {
        self.l1.iter().any(|w| *w > 0.0)
    }

    pub fn has_bounds(&self) -> bool {
        self.lo.iter().any(|v| v.is_finite()) || self.hi.iter().any(|v| v.is_finite())
    }

    /// Value of the smooth part only (quadratic + linear + constant).
    pub fn smooth_value(&self, u: &DVector<f64>) -> f64 {
        let mut v = self.linear.dot(u) + self.constant;
        if let Some(q) = &self.quad {
            v += 0.5 * u.dot(&(q * u));
        }
        v
    }

    pub fn value(&self, u: &DVector<f64>) -> ObjectiveValue {
        if !self.contains(u) {
            return ObjectiveValue::Infinite;
        }
        let l1: f64 = self.l1.iter().zip(u.iter()).map(|(w, v)| w * v.abs()).sum();
        ObjectiveValue::Finite(self.smooth_value(u) + l1)
    }

    /// Componentwise `clamp(soft(v, t·w), lo, hi)`: the prox of `t·(l1 + box)`.
    pub fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            (0..v.len()).map(|j| soft(v[j], t * self.l1[j]).clamp(self.lo[j], self.hi[j])),
        )
    }
}

fn check_symmetric_psd(q: &DMatrix<f64>) -> Result<(), String> {
    if !q.is_square() {
        return Err(format!("matrix is {}x{}, not square", q.nrows(), q.ncols()));
    }
    let scale = 1.0 + q.amax();
    let n = q.nrows();
    for i in 0..n {
        for j in 0..i {
            if (q[(i, j)] - q[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(format!("not symmetric at ({i}, {j})"));
            }
        }
    }
    if n > 0 {
        let min_eig = SymmetricEigen::new(q.clone()).eigenvalues.min();
        if min_eig < -SYMMETRY_TOL * scale {
            return Err(format!("not positive semidefinite (min eigenvalue {min_eig:e})"));
        }
    }
    Ok(())
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if t == 0.0 {
        v
    } else {
        v.signum() * (v.abs() - t).max(0.0)
    }
}

/// Soft thresholding: the prox of `t‖·‖₁`.
pub fn prox_l1(v: &DVector<f64>, t: f64) -> Result<DVector<f64>, ProxError> {
    if !(t >= 0.0) {
        return Err(ProxError::NegativeThreshold(t));
    }
    Ok(v.map(|x| soft(x, t)))
}

/// Componentwise clamp onto `[lo, hi]`.
pub fn project_box(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
    if v.len() != lo.len() || v.len() != hi.len() {
        return Err(ProxError::Ragged(format!(
            "point has length {}, bounds {}/{}",
            v.len(),
            lo.len(),
            hi.len()
        )));
    }
    for j in 0..v.len() {
        if !(lo[j] <= hi[j]) {
            return Err(ProxError::InvertedBounds {
                index: j,
                lo: lo[j],
                hi: hi[j],
            });
        }
    }
    Ok(DVector::from_iterator(
        v.len(),
        (0..v.len()).map(|j| v[j].clamp(lo[j], hi[j])),
    ))
}

/// Euclidean projection onto `{z : Σ z_i = 0}`: subtract the mean.
pub fn project_zero_sum(w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>, ProxError> {
    let Some(first) = w.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| v.len() != m) {
        return Err(ProxError::Ragged(format!(
            "vector {i} has length {}, expected {m}",
            v.len()
        )));
    }
    let mut mean = DVector::zeros(m);
    for v in w {
        mean += v;
    }
    mean /= w.len() as f64;
    Ok(w.iter().map(|v| v - &mean).collect())
}

/// A block subproblem in standard form:
/// `minimize ½ uᵀ quadratic_coeff u + linear_coeffᵀ u + handle(u)` over `local_set`.
#[derive(Debug, Clone)]
pub struct SubproblemRequest {
    pub handle: ObjectiveHandle,
    pub linear_coeff: DVector<f64>,
    pub quadratic_coeff: DMatrix<f64>,
    pub local_set: LocalSet,
}

/// One-shot solve of a subproblem request.
pub fn solve_block_subproblem(req: &SubproblemRequest) -> Result<DVector<f64>, ProxError> {
    let n = req.linear_coeff.len();
    let (lo, hi) = req.local_set.bounds(n).map_err(ProxError::InvalidRequest)?;
    let model = BlockModel::build(&req.handle, lo, hi).map_err(ProxError::InvalidRequest)?;
    PreparedSubproblem::new(&model, &req.quadratic_coeff)?.solve(&req.linear_coeff, None)
}

pub const INNER_TOL: f64 = 1e-10;
pub const INNER_MAX_STEPS: usize = 10_000;
const POLISH_EVERY: usize = 25;

#[derive(Debug, Clone)]
enum Method {
    /// Separable: closed form per coordinate.
    Diagonal(DVector<f64>),
    /// Smooth and unconstrained: one cached Cholesky factor.
    Cholesky(Cholesky<f64, Dyn>),
    /// Accelerated proximal gradient with active-set polishing.
    Iterative { lipschitz: f64 },
}

/// A block subproblem with its curvature fixed and factored.
#[derive(Debug, Clone)]
pub struct PreparedSubproblem {
    method: Method,
    h: DMatrix<f64>,
    linear: DVector<f64>,
    l1: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl PreparedSubproblem {
    /// `quadratic_coeff` is the coupling curvature; the model's own quadratic
    /// term is added to it.
    pub fn new(model: &BlockModel, quadratic_coeff: &DMatrix<f64>) -> Result<Self, ProxError> {
        let n = model.dim();
        if quadratic_coeff.shape() != (n, n) {
            return Err(ProxError::InvalidRequest(format!(
                "quadratic coefficient has shape {:?}, expected ({n}, {n})",
                quadratic_coeff.shape()
            )));
        }
        let mut h = quadratic_coeff.clone();
        if let Some(q) = &model.quad {
            h += q;
        }
        check_symmetric_psd(&h).map_err(|e| ProxError::InvalidRequest(format!("quadratic coefficient {e}")))?;

        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == 0.0));
        let method = if diagonal {
            Method::Diagonal(h.diagonal())
        } else if !model.has_l1() && !model.has_bounds() {
            match h.clone().cholesky() {
                Some(c) => Method::Cholesky(c),
                None => {
                    return Err(ProxError::IllPosed(
                        "quadratic coefficient is singular and the objective adds no strict convexity".into(),
                    ))
                }
            }
        } else {
            let lipschitz = SymmetricEigen::new(h.clone()).eigenvalues.max();
            Method::Iterative { lipschitz }
        };
        Ok(Self {
            method,
            h,
            linear: model.linear.clone(),
            l1: model.l1.clone(),
            lo: model.lo.clone(),
            hi: model.hi.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Total curvature `H` (coupling plus the objective's own quadratic).
    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Minimizer for linear coefficient `b` (the objective's own linear term
    /// is added internally). `warm` seeds the iterative path.
    pub fn solve(&self, b: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>, ProxError> {
        if b.len() != self.dim() {
            return Err(ProxError::Ragged(format!(
                "linear coefficient has length {}, expected {}",
                b.len(),
                self.dim()
            )));
        }
        let b = b + &self.linear;
        let u = match &self.method {
            Method::Diagonal(d) => self.solve_diagonal(d, &b)?,
            Method::Cholesky(c) => c.solve(&(-&b)),
            Method::Iterative { lipschitz } => self.solve_iterative(*lipschitz, &b, warm)?,
        };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ProxError::IllPosed("subproblem solution is not finite".into()));
        }
        Ok(u)
    }

    fn solve_diagonal(&self, d: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
        let mut u = DVector::zeros(d.len());
        for j in 0..d.len() {
            let (lo, hi, w) = (self.lo[j], self.hi[j], self.l1[j]);
            u[j] = if d[j] > 0.0 {
                soft(-b[j] / d[j], w / d[j]).clamp(lo, hi)
            } else if b[j].abs() <= w {
                0.0_f64.clamp(lo, hi)
            } else if b[j] > w {
                // both one-sided slopes positive: minimum at the lower bound
                if lo.is_finite() {
                    lo
                } else {
                    return Err(ProxError::IllPosed(format!("coordinate {j} is unbounded below")));
                }
            } else if hi.is_finite() {
                hi
            } else {
                return Err(ProxError::IllPosed(format!("coordinate {j} is unbounded below")));
            };
        }
        Ok(u)
    }

    fn grad(&self, u: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        &self.h * u + b
    }

    /// Infinity norm of the gradient mapping `L (u − prox(u − ∇/L))`.
    fn stationarity(&self, lipschitz: f64, u: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let t = 1.0 / lipschitz;
        let g = self.grad(u, b);
        let step = self.prox_point(&(u - g * t), t);
        (u - step).amax() * lipschitz
    }

    fn prox_point(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            (0..v.len()).map(|j| soft(v[j], t * self.l1[j]).clamp(self.lo[j], self.hi[j])),
        )
    }

    fn solve_iterative(
        &self,
        lipschitz: f64,
        b: &DVector<f64>,
        warm: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>, ProxError> {
        let n = self.dim();
        let tol = INNER_TOL * (1.0 + b.amax());
        let t = 1.0 / lipschitz;
        let start = match warm {
            Some(w) if w.len() == n && w.iter().all(|v| v.is_finite()) => w.clone(),
            _ => DVector::zeros(n),
        };
        let mut x = self.prox_point(&start, 0.0);
        if let Some(p) = self.polish(&x, b, lipschitz, tol) {
            return Ok(p);
        }
        let mut y = x.clone();
        let mut theta = 1.0_f64;
        let mut best = (self.stationarity(lipschitz, &x, b), x.clone());
        for step in 1..=INNER_MAX_STEPS {
            let g = self.grad(&y, b);
            let x_next = self.prox_point(&(&y - g * t), t);
            if x_next.amax() > 1e15 || x_next.iter().any(|v| !v.is_finite()) {
                return Err(ProxError::IllPosed("subproblem appears unbounded below".into()));
            }
            // gradient-based adaptive restart
            let restart = (&y - &x_next).dot(&(&x_next - &x)) > 0.0;
            let theta_next = if restart {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt())
            };
            let momentum = if restart { 0.0 } else { (theta - 1.0) / theta_next };
            y = &x_next + (&x_next - &x) * momentum;
            x = x_next;
            theta = theta_next;

            if step % 5 == 0 {
                let s = self.stationarity(lipschitz, &x, b);
                if s < best.0 {
                    best = (s, x.clone());
                }
                if s <= tol {
                    return Ok(x);
                }
            }
            if step % POLISH_EVERY == 0 {
                if let Some(p) = self.polish(&x, b, lipschitz, tol) {
                    return Ok(p);
                }
            }
        }
        Ok(best.1)
    }

    /// Fix coordinates sitting on a bound or on an l1 kink, solve the reduced
    /// linear system for the rest, and accept the result only if it is
    /// stationary to `tol`.
    fn polish(&self, u: &DVector<f64>, b: &DVector<f64>, lipschitz: f64, tol: f64) -> Option<DVector<f64>> {
        let n = self.dim();
        let mut free = Vec::with_capacity(n);
        let mut sign = vec![0.0; n];
        for j in 0..n {
            let at_bound = u[j] <= self.lo[j] || u[j] >= self.hi[j];
            let at_kink = self.l1[j] > 0.0 && u[j] == 0.0;
            if !at_bound && !at_kink {
                free.push(j);
                sign[j] = if self.l1[j] > 0.0 { u[j].signum() } else { 0.0 };
            }
        }
        let mut cand = u.clone();
        if !free.is_empty() {
            let k = free.len();
            let mut hff = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            let fixed: Vec<usize> = (0..n).filter(|j| !free.contains(j)).collect();
            for (a, &i) in free.iter().enumerate() {
                let mut r = -b[i] - self.l1[i] * sign[i];
                for &j in &fixed {
                    r -= self.h[(i, j)] * u[j];
                }
                rhs[a] = r;
                for (c, &j) in free.iter().enumerate() {
                    hff[(a, c)] = self.h[(i, j)];
                }
            }
            let sol = hff.cholesky()?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                let v = sol[a];
                if v < self.lo[i] || v > self.hi[i] || sign[i] * v < 0.0 {
                    return None;
                }
                cand[i] = v;
            }
        }
        (self.stationarity(lipschitz, &cand, b) <= tol).then_some(cand)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn prox_l1_closed_form() {
        let v = dvector![3.0, -1.0, 0.5];
        assert_eq!(prox_l1(&v, 1.0).unwrap(), dvector![2.0, 0.0, 0.0]);
        assert_eq!(prox_l1(&v, 0.0).unwrap(), v);
        assert_eq!(prox_l1(&v, -1.0).unwrap_err(), ProxError::NegativeThreshold(-1.0));
    }

    /// Bisection on the monotone subdifferential `t·∂|u| + u − v`.
    fn bisect_l1(v: f64, t: f64) -> f64 {
        let slope = |u: f64| t * u.signum() + u - v;
        let (mut a, mut b) = (-v.abs() - 1.0, v.abs() + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid == 0.0 {
                // 0 is optimal iff |v| ≤ t; otherwise step off the kink
                if v.abs() <= t {
                    return 0.0;
                }
                if v > 0.0 { a = mid } else { b = mid }
                continue;
            }
            if slope(mid) > 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn project_box_clamps() {
        let lo = dvector![0.0, 0.0];
        let hi = dvector![1.0, 1.0];
        assert_eq!(project_box(&dvector![2.0, -2.0], &lo, &hi).unwrap(), dvector![1.0, 0.0]);
        let inside = dvector![0.25, 0.75];
        assert_eq!(project_box(&inside, &lo, &hi).unwrap(), inside);
        assert!(matches!(
            project_box(&inside, &hi, &lo),
            Err(ProxError::InvertedBounds { index: 0, .. })
        ));
    }

    #[test]
    fn project_box_matches_grid_search() {
        let lo = dvector![-1.0, 0.5];
        let hi = dvector![0.5, 2.0];
        let v = dvector![0.9, -0.3];
        let p = project_box(&v, &lo, &hi).unwrap();
        let mut best = (f64::INFINITY, (0.0, 0.0));
        let steps = 1500;
        for a in 0..=steps {
            for b in 0..=steps {
                let x = lo[0] + (hi[0] - lo[0]) * a as f64 / steps as f64;
                let y = lo[1] + (hi[1] - lo[1]) * b as f64 / steps as f64;
                let d = (x - v[0]).powi(2) + (y - v[1]).powi(2);
                if d < best.0 {
                    best = (d, (x, y));
                }
            }
        }
        assert!((p[0] - best.1 .0).abs() < 1e-3 && (p[1] - best.1 .1).abs() < 1e-3);
    }

    #[test]
    fn zero_sum_projection() {
        // minimize (z1 − 1)² + (z2 + 3)² subject to z1 + z2 = 0:
        // stationarity gives z1 − 1 = z2 + 3, so z1 = 2, z2 = −2.
        let out = project_zero_sum(&[dvector![1.0], dvector![-3.0]]).unwrap();
        assert_eq!(out, vec![dvector![2.0], dvector![-2.0]]);

        let already = vec![dvector![1.5, -2.0], dvector![-1.5, 2.0]];
        assert_eq!(project_zero_sum(&already).unwrap(), already);

        assert!(matches!(
            project_zero_sum(&[dvector![1.0], dvector![1.0, 2.0]]),
            Err(ProxError::Ragged(_))
        ));
    }

    #[test]
    fn subproblem_identity_least_squares() {
        let req = SubproblemRequest {
            handle: ObjectiveHandle::Zero,
            linear_coeff: dvector![-1.0, 2.0, -3.0],
            quadratic_coeff: DMatrix::identity(3, 3),
            local_set: LocalSet::Unbounded,
        };
        assert_eq!(solve_block_subproblem(&req).unwrap(), dvector![1.0, -2.0, 3.0]);
    }

    #[test]
    fn subproblem_l1_reduces_to_prox() {
        let v = dvector![3.0, -1.0, 0.5, -4.0];
        let req = SubproblemRequest {
            handle: ObjectiveHandle::L1 { beta: 1.0, coords: None },
            linear_coeff: -&v,
            quadratic_coeff: DMatrix::identity(4, 4),
            local_set: LocalSet::Unbounded,
        };
        assert_eq!(solve_block_subproblem(&req).unwrap(), prox_l1(&v, 1.0).unwrap());
    }

    #[test]
    fn singular_smooth_subproblem_is_ill_posed() {
        let req = SubproblemRequest {
            handle: ObjectiveHandle::Zero,
            linear_coeff: dvector![1.0, 1.0],
            quadratic_coeff: DMatrix::from_element(2, 2, 1.0),
            local_set: LocalSet::Unbounded,
        };
        assert!(matches!(solve_block_subproblem(&req), Err(ProxError::IllPosed(_))));
    }

    #[test]
    fn unbounded_linear_coordinate_is_ill_posed() {
        let req = SubproblemRequest {
            handle: ObjectiveHandle::Zero,
            linear_coeff: dvector![1.0],
            quadratic_coeff: DMatrix::zeros(1, 1),
            local_set: LocalSet::Nonnegative,
        };
        // slope +1 on [0, ∞): minimum at 0
        assert_eq!(solve_block_subproblem(&req).unwrap(), dvector![0.0]);
        let req = SubproblemRequest {
            linear_coeff: dvector![-1.0],
            ..req
        };
        assert!(matches!(solve_block_subproblem(&req), Err(ProxError::IllPosed(_))));
    }

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b.transpose() * &b + DMatrix::identity(n, n) * 0.1
    }

    /// Plain projected gradient, step 1/L, run far past convergence.
    fn projected_gradient(h: &DMatrix<f64>, b: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
        let l = SymmetricEigen::new(h.clone()).eigenvalues.max();
        let mut u = DVector::zeros(b.len());
        for _ in 0..200_000 {
            let g = h * &u + b;
            u = project_box(&(&u - g / l), lo, hi).unwrap();
        }
        u
    }

    #[test]
    fn boxed_subproblem_matches_projected_gradient() {
        let h = random_psd(5, 11);
        let b = dvector![1.0, -2.0, 0.5, 3.0, -1.5];
        let lo = DVector::from_element(5, -0.4);
        let hi = DVector::from_element(5, 0.6);
        let req = SubproblemRequest {
            handle: ObjectiveHandle::Zero,
            linear_coeff: b.clone(),
            quadratic_coeff: h.clone(),
            local_set: LocalSet::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
        };
        let u = solve_block_subproblem(&req).unwrap();
        let oracle = projected_gradient(&h, &b, &lo, &hi);
        assert!((&u - &oracle).amax() < 1e-9, "{u} vs {oracle}");
    }

    #[test]
    fn smooth_subproblem_first_order_optimality() {
        let h = random_psd(6, 5);
        let b = DVector::from_fn(6, |i, _| (i as f64) - 2.5);
        let req = SubproblemRequest {
            handle: ObjectiveHandle::Zero,
            linear_coeff: b.clone(),
            quadratic_coeff: h.clone(),
            local_set: LocalSet::Unbounded,
        };
        let u = solve_block_subproblem(&req).unwrap();
        assert!((&h * &u + &b).norm() <= 1e-8 * (1.0 + b.norm()));
    }

    #[test]
    fn l1_with_dense_curvature_is_stationary() {
        let h = random_psd(6, 9);
        let b = DVector::from_fn(6, |i, _| 2.0 * (i as f64) - 5.0);
        let model = BlockModel::build(
            &ObjectiveHandle::L1 { beta: 0.7, coords: Some(vec![1, 3, 4]) },
            DVector::from_element(6, f64::NEG_INFINITY),
            DVector::from_element(6, f64::INFINITY),
        )
        .unwrap();
        let prep = PreparedSubproblem::new(&model, &h).unwrap();
        let u = prep.solve(&b, None).unwrap();
        let l = SymmetricEigen::new(h.clone()).eigenvalues.max();
        assert!(prep.stationarity(l, &u, &b) <= INNER_TOL * (1.0 + b.amax()));
    }

    proptest! {
        #[test]
        fn prox_l1_matches_subgradient_bisection(v in -10.0f64..10.0, t in 0.0f64..5.0) {
            let u = prox_l1(&dvector![v], t).unwrap()[0];
            prop_assert!((u - bisect_l1(v, t)).abs() < 1e-9);
        }

        #[test]
        fn prox_l1_nonexpansive(
            u in proptest::collection::vec(-10.0f64..10.0, 4),
            v in proptest::collection::vec(-10.0f64..10.0, 4),
            t in 0.0f64..5.0,
        ) {
            let (u, v) = (DVector::from_vec(u), DVector::from_vec(v));
            let d = (prox_l1(&u, t).unwrap() - prox_l1(&v, t).unwrap()).norm();
            prop_assert!(d <= (&u - &v).norm() + 1e-12);
        }

        #[test]
        fn zero_sum_idempotent_and_feasible(
            w in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 3), 1..6)
        ) {
            let w: Vec<_> = w.into_iter().map(DVector::from_vec).collect();
            let once = project_zero_sum(&w).unwrap();
            let twice = project_zero_sum(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).amax() <= 1e-12);
            }
            let wmax = w.iter().map(|v| v.amax()).fold(0.0, f64::max);
            let sum = once.iter().fold(DVector::zeros(3), |acc, z| acc + z);
            prop_assert!(sum.amax() <= 1e-12 * w.len() as f64 * wmax.max(1e-300));
        }

        #[test]
        fn box_projection_stays_inside(
            v in proptest::collection::vec(-10.0f64..10.0, 3),
            lo in proptest::collection::vec(-5.0f64..0.0, 3),
            width in proptest::collection::vec(0.0f64..5.0, 3),
        ) {
            let lo = DVector::from_vec(lo);
            let hi = &lo + DVector::from_vec(width);
            let v = DVector::from_vec(v);
            let p = project_box(&v, &lo, &hi).unwrap();
            for j in 0..3 {
                prop_assert!(p[j] >= lo[j] && p[j] <= hi[j]);
            }
            prop_assert_eq!(project_box(&p, &lo, &hi).unwrap(), p);
        }
    }
}
