//! Centralized reference solver for the monolithic problem.
//!
//! The stacked problem is rewritten as the quadratic program
//!
//! ```text
//!   minimize ½ yᵀ P y + pᵀ y   subject to  E y = e,  G y ≤ h
//! ```
//!
//! with epigraph variables `t_j ≥ |x_j|` for every l1-weighted coordinate,
//! bound rows for finite box sides and equality rows for pinned coordinates,
//! and solved by Mehrotra's predictor-corrector interior-point method on
//! dense KKT systems. Problems without inequalities are solved by one direct
//! KKT solve. None of this shares code with the ADMM engines.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{eval_objective, ProblemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x_star: Vec<DVector<f64>>,
    pub objective_star: f64,
    /// `‖Σ A_i x_i − c‖₂` at `x_star`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle failed: {0}")]
    Failure(String),
}

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-12;
/// Required constraint accuracy of the returned point, relative to `1 + ‖x‖`.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Dense convex QP `min ½yᵀPy + pᵀy s.t. Ey = e, Gy ≤ h`.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p_mat: DMatrix<f64>,
    pub p_vec: DVector<f64>,
    pub e_mat: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    pub g_mat: DMatrix<f64>,
    pub h_vec: DVector<f64>,
}

impl DenseQp {
    /// Monolithic QP of `problem`; the first `problem.total_dim()` entries of
    /// `y` are the stacked blocks, the rest are l1 epigraph variables.
    pub fn from_problem(problem: &ProblemSpec) -> Self {
        let nx = problem.total_dim();
        let mut lo = Vec::with_capacity(nx);
        let mut hi = Vec::with_capacity(nx);
        let mut w = Vec::with_capacity(nx);
        for i in 0..problem.num_blocks() {
            let m = problem.model(i);
            lo.extend(m.lo.iter().copied());
            hi.extend(m.hi.iter().copied());
            w.extend(m.l1.iter().copied());
        }
        let l1_coords: Vec<usize> = (0..nx).filter(|&j| w[j] > 0.0).collect();
        let n = nx + l1_coords.len();

        let mut p_mat = DMatrix::zeros(n, n);
        let mut p_vec = DVector::zeros(n);
        let mut off = 0;
        for i in 0..problem.num_blocks() {
            let m = problem.model(i);
            let d = m.dim();
            if let Some(q) = &m.quad {
                p_mat.view_mut((off, off), (d, d)).copy_from(q);
            }
            p_vec.rows_mut(off, d).copy_from(&m.linear);
            off += d;
        }
        for (t, &j) in l1_coords.iter().enumerate() {
            p_vec[nx + t] = w[j];
        }

        let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut ineq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for j in 0..nx {
            if lo[j] == hi[j] {
                eq_rows.push((vec![(j, 1.0)], lo[j]));
                continue;
            }
            if hi[j].is_finite() {
                ineq_rows.push((vec![(j, 1.0)], hi[j]));
            }
            if lo[j].is_finite() {
                ineq_rows.push((vec![(j, -1.0)], -lo[j]));
            }
        }
        for (t, &j) in l1_coords.iter().enumerate() {
            ineq_rows.push((vec![(j, 1.0), (nx + t, -1.0)], 0.0));
            ineq_rows.push((vec![(j, -1.0), (nx + t, -1.0)], 0.0));
        }

        let rows = problem.rows();
        let mut e_mat = DMatrix::zeros(rows + eq_rows.len(), n);
        let mut e_vec = DVector::zeros(rows + eq_rows.len());
        let mut off = 0;
        for i in 0..problem.num_blocks() {
            let a = problem.coupling(i);
            e_mat.view_mut((0, off), a.shape()).copy_from(a);
            off += a.ncols();
        }
        e_vec.rows_mut(0, rows).copy_from(problem.rhs());
        for (r, (entries, rhs)) in eq_rows.into_iter().enumerate() {
            for (j, v) in entries {
                e_mat[(rows + r, j)] = v;
            }
            e_vec[rows + r] = rhs;
        }
        let mut g_mat = DMatrix::zeros(ineq_rows.len(), n);
        let mut h_vec = DVector::zeros(ineq_rows.len());
        for (r, (entries, rhs)) in ineq_rows.into_iter().enumerate() {
            for (j, v) in entries {
                g_mat[(r, j)] = v;
            }
            h_vec[r] = rhs;
        }
        Self {
            p_mat,
            p_vec,
            e_mat,
            e_vec,
            g_mat,
            h_vec,
        }
    }

    fn dim(&self) -> usize {
        self.p_vec.len()
    }
}

/// Saddle-point system `[[K11 + δI, Eᵀ], [E, −δI]]` factored once, solved
/// with iterative refinement against the unregularized matrix.
struct Kkt {
    exact: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Kkt {
    fn new(k11: &DMatrix<f64>, e: &DMatrix<f64>) -> Self {
        let n = k11.nrows();
        let me = e.nrows();
        let mut exact = DMatrix::zeros(n + me, n + me);
        exact.view_mut((0, 0), (n, n)).copy_from(k11);
        exact.view_mut((n, 0), (me, n)).copy_from(e);
        exact.view_mut((0, n), (n, me)).copy_from(&e.transpose());
        let scale = 1.0 + exact.amax();
        let delta = 1e-13 * scale;
        let mut reg = exact.clone();
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..n + me {
            reg[(i, i)] -= delta;
        }
        Self { exact, lu: reg.lu() }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..4 {
            let r = rhs - &self.exact * &x;
            if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                break;
            }
            x += self.lu.solve(&r)?;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

/// Newton direction `(dy, dν, ds, dz)`.
type Step = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

/// Solves a dense convex QP; returns `(y, iterations)`.
pub fn solve_dense_qp(qp: &DenseQp) -> Result<(DVector<f64>, usize), OracleError> {
    let n = qp.dim();
    let me = qp.e_mat.nrows();
    let mi = qp.g_mat.nrows();

    if mi == 0 {
        let kkt = Kkt::new(&qp.p_mat, &qp.e_mat);
        let mut rhs = DVector::zeros(n + me);
        rhs.rows_mut(0, n).copy_from(&(-&qp.p_vec));
        rhs.rows_mut(n, me).copy_from(&qp.e_vec);
        let sol = kkt
            .solve(&rhs)
            .ok_or_else(|| OracleError::Failure("singular KKT system".into()))?;
        let y = sol.rows(0, n).into_owned();
        let stationarity = &qp.p_mat * &y + &qp.p_vec + qp.e_mat.tr_mul(&sol.rows(n, me).into_owned());
        if stationarity.amax() > 1e-8 * (1.0 + qp.p_vec.amax() + qp.p_mat.amax() * y.amax()) {
            return Err(OracleError::Failure(
                "no stationary point: objective unbounded below or constraints inconsistent".into(),
            ));
        }
        return Ok((y, 1));
    }

    let g = &qp.g_mat;
    let mut y = DVector::zeros(n);
    let mut nu = DVector::zeros(me);
    let mut s = (&qp.h_vec - g * &y).map(|v| v.max(1.0));
    let mut z = DVector::from_element(mi, 1.0);

    let scale_d = 1.0 + qp.p_vec.amax();
    let scale_p = 1.0 + qp.e_vec.amax();
    let scale_g = 1.0 + qp.h_vec.amax();

    for it in 0..MAX_ITER {
        let r_d = &qp.p_mat * &y + &qp.p_vec + qp.e_mat.tr_mul(&nu) + g.tr_mul(&z);
        let r_p = &qp.e_mat * &y - &qp.e_vec;
        let r_g = g * &y + &s - &qp.h_vec;
        let mu = s.dot(&z) / mi as f64;
        let obj = 0.5 * y.dot(&(&qp.p_mat * &y)) + qp.p_vec.dot(&y);
        if r_d.amax() <= TOL * scale_d
            && r_p.amax() <= TOL * scale_p
            && r_g.amax() <= TOL * scale_g
            && mu <= TOL * (1.0 + obj.abs())
        {
            return Ok((y, it));
        }
        if !(mu.is_finite() && y.amax().is_finite()) {
            break;
        }

        let w = z.component_div(&s);
        let mut k11 = qp.p_mat.clone();
        let mut wg = g.clone();
        for (r, mut row) in wg.row_iter_mut().enumerate() {
            row *= w[r];
        }
        k11 += g.tr_mul(&wg);
        let kkt = Kkt::new(&k11, &qp.e_mat);

        let newton = |r_c: &DVector<f64>| -> Option<Step> {
            let t = (z.component_mul(&r_g) - r_c).component_div(&s);
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&(-&r_d - g.tr_mul(&t)));
            rhs.rows_mut(n, me).copy_from(&(-&r_p));
            let sol = kkt.solve(&rhs)?;
            let dy = sol.rows(0, n).into_owned();
            let dnu = sol.rows(n, me).into_owned();
            let gdy = g * &dy;
            let dz = w.component_mul(&gdy) + t;
            let ds = -&r_g - gdy;
            Some((dy, dnu, ds, dz))
        };

        let failed = || OracleError::Failure("singular Newton system".into());
        let r_c_aff = s.component_mul(&z);
        let (_, _, ds_a, dz_a) = newton(&r_c_aff).ok_or_else(failed)?;
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (&s + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / mi as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let r_c = r_c_aff + ds_a.component_mul(&dz_a) - DVector::from_element(mi, sigma * mu);
        let (dy, dnu, ds, dz) = newton(&r_c).ok_or_else(failed)?;
        let alpha = (0.995 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        y += &dy * alpha;
        nu += &dnu * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
    }
    Err(OracleError::Failure(format!(
        "interior-point method stalled after {MAX_ITER} iterations (infeasible or unbounded?)"
    )))
}

/// Solves the monolithic problem to constraint accuracy
/// `RESIDUAL_TOL · (1 + ‖x‖)`.
pub fn oracle_solve(problem: &ProblemSpec) -> Result<OracleSolution, OracleError> {
    let qp = DenseQp::from_problem(problem);
    let (y, iterations) = solve_dense_qp(&qp)?;
    let mut x_star = Vec::with_capacity(problem.num_blocks());
    let mut off = 0;
    for i in 0..problem.num_blocks() {
        let m = problem.model(i);
        let d = m.dim();
        let xi = DVector::from_fn(d, |j, _| y[off + j].clamp(m.lo[j], m.hi[j]));
        x_star.push(xi);
        off += d;
    }
    let residual = problem.residual(&x_star).norm();
    let xnorm = x_star.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    if !(residual <= RESIDUAL_TOL * (1.0 + xnorm)) {
        return Err(OracleError::Failure(format!(
            "constraint residual {residual:e} above tolerance at the returned point"
        )));
    }
    let objective_star = eval_objective(problem, &x_star)
        .map_err(|e| OracleError::Failure(e.to_string()))?
        .finite()
        .ok_or_else(|| OracleError::Failure("objective infinite at the returned point".into()))?;
    Ok(OracleSolution {
        x_star,
        objective_star,
        residual,
        iterations,
    })
}
