//! Kalman filtering and constrained belief projection.
//!
//! The unconstrained path is a standard linear-Gaussian predict/correct
//! over the lifted state `[q; v]`. The constrained path projects the
//! belief onto the constraint sets of a contact state: equalities in
//! closed form, combined equality/inequality systems by a primal
//! active-set method warm-started from the equality projection.
//! Covariances shrink only along equality rows; inequality rows move the
//! mean but never the covariance.

use nalgebra::{DMatrix, DVector};

use crate::constraints::ConstraintSet;
use crate::mathutil::{symmetric_eigen_jacobi, symmetrize};
use crate::transition::LinearTransition;
use crate::{Error, Result};

/// Gaussian belief over the lifted state.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, mut cov: DMatrix<f64>) -> Self {
        symmetrize(&mut cov);
        GaussianBelief { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Clamps negative covariance eigenvalues to zero (numerical guard).
    pub fn enforce_psd(&mut self) {
        symmetrize(&mut self.cov);
        let n = self.cov.nrows();
        let scale = self.cov.amax();
        if scale == 0.0 {
            return;
        }
        // cheap certificate: a ridged Cholesky passing means any negative
        // eigenvalue is below noise level and the matrix can stay as-is
        let ridge = DMatrix::identity(n, n) * (1e-12 * scale);
        if (&self.cov + &ridge).cholesky().is_some() {
            return;
        }
        let (vals, vecs) = symmetric_eigen_jacobi(&self.cov);
        let clamped = DVector::from_fn(n, |i, _| vals[i].max(0.0));
        self.cov = &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose();
        symmetrize(&mut self.cov);
    }
}

/// Outcome of a belief projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionStatus {
    /// Constraints satisfied at the returned belief.
    Projected,
    /// Constraint set was inconsistent; the belief is returned unprojected.
    Infeasible,
    /// Active-set iteration limit hit; best iterate returned.
    MaxIterations,
}

/// Projected belief plus diagnostics.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub belief: GaussianBelief,
    /// Indices of inequality rows active at the solution.
    pub active_set: Vec<usize>,
    /// Equality-row projection matrix (drives the covariance collapse).
    pub gamma: DMatrix<f64>,
    pub iterations: usize,
    pub status: ProjectionStatus,
}

/// Kalman prediction through the lifted contact-conditioned transition.
pub fn kalman_predict(
    belief: &GaussianBelief,
    trans: &LinearTransition,
    q_process: &DMatrix<f64>,
) -> GaussianBelief {
    let (t, d) = trans.lifted(trans.h);
    let mean = &t * &belief.mean + d;
    let mut cov = &t * &belief.cov * t.transpose() + q_process;
    symmetrize(&mut cov);
    GaussianBelief { mean, cov }
}

/// Standard linear-Gaussian correction with a Joseph-form covariance update.
pub fn kalman_correct(
    belief: &GaussianBelief,
    z: &DVector<f64>,
    h_z: &DMatrix<f64>,
    r_z: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let s = h_z * &belief.cov * h_z.transpose() + r_z;
    let s_chol = s.clone().cholesky().ok_or(Error::BadMeasurementNoise)?;
    let k = &belief.cov * h_z.transpose() * s_chol.inverse();
    let mean = &belief.mean + &k * (z - h_z * &belief.mean);
    let n = belief.dim();
    let ikh = DMatrix::identity(n, n) - &k * h_z;
    let mut cov = &ikh * &belief.cov * ikh.transpose() + &k * r_z * k.transpose();
    symmetrize(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

/// Output of [`affine_project`]: the moved mean, the gain that moved it,
/// and the constraint multipliers (`corrected = mean - W^-1 A^T lambda`).
struct AffineProjection {
    corrected: DVector<f64>,
    gamma: DMatrix<f64>,
    lambda: DVector<f64>,
}

/// Internal: projection of `mean` onto `A x = b` under metric `W`,
/// using `w_inv = W^-1`.
fn affine_project(
    mean: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    w_inv: &DMatrix<f64>,
) -> Option<AffineProjection> {
    let awat = a * w_inv * a.transpose();
    let residual = a * mean - b;
    // Redundant rows make `awat` rank-deficient; a Cholesky may still pass
    // on a near-zero pivot and return a useless inverse, so verify it and
    // fall back to a minimum-norm pseudo-inverse.
    let m = awat.nrows();
    let gain = awat
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .filter(|g| ((&awat * g) - DMatrix::identity(m, m)).amax() <= 1e-8)
        .or_else(|| {
            let eps = (1e-12 * awat.amax()).max(f64::MIN_POSITIVE);
            awat.clone().pseudo_inverse(eps).ok()
        })?;
    let lambda = &gain * residual;
    let gamma = w_inv * a.transpose() * gain;
    let corrected = mean - w_inv * a.transpose() * &lambda;
    if !corrected.iter().all(|x| x.is_finite()) || !gamma.iter().all(|x| x.is_finite()) {
        return None;
    }
    Some(AffineProjection {
        corrected,
        gamma,
        lambda,
    })
}

/// Stacks the equality rows with the selected inequality rows.
fn stack_rows(cs: &ConstraintSet, rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let n_eq = cs.a_eq.nrows();
    let dim = cs.a_eq.ncols().max(cs.a_ineq.ncols());
    let mut a = DMatrix::zeros(n_eq + rows.len(), dim);
    let mut b = DVector::zeros(n_eq + rows.len());
    a.view_mut((0, 0), (n_eq, dim)).copy_from(&cs.a_eq);
    b.rows_mut(0, n_eq).copy_from(&cs.b_eq);
    for (k, &row) in rows.iter().enumerate() {
        a.row_mut(n_eq + k).copy_from(&cs.a_ineq.row(row));
        b[n_eq + k] = cs.b_ineq[row];
    }
    (a, b)
}

/// Inequality-row cap for the exhaustive active-set fallback.
const ENUM_MAX_ROWS: usize = 12;

/// Finds the projection's KKT point by trying every subset of inequality
/// rows as the active set. Used when the incremental working-set loop
/// paints itself into an inconsistent corner; with the problem's strictly
/// convex objective any subset passing the feasibility and multiplier-sign
/// checks is the global optimum.
fn exhaustive_active_set(
    mean: &DVector<f64>,
    cs: &ConstraintSet,
    w_inv: &DMatrix<f64>,
    tol: f64,
) -> Option<(DVector<f64>, Vec<usize>)> {
    let mi = cs.a_ineq.nrows();
    if mi > ENUM_MAX_ROWS {
        return None;
    }
    let n_eq = cs.a_eq.nrows();
    for mask in 0u32..(1u32 << mi) {
        let active: Vec<usize> = (0..mi).filter(|&i| mask >> i & 1 == 1).collect();
        let (a, b) = stack_rows(cs, &active);
        let candidate = if a.nrows() == 0 {
            mean.clone()
        } else {
            let Some(p) = affine_project(mean, &a, &b, w_inv) else { continue };
            if (&a * &p.corrected - &b).amax() > tol {
                continue;
            }
            if (0..active.len()).any(|k| p.lambda[n_eq + k] > tol) {
                continue;
            }
            p.corrected
        };
        if n_eq > 0 && (&cs.a_eq * &candidate - &cs.b_eq).amax() > tol {
            continue;
        }
        if mi > 0 && (&cs.a_ineq * &candidate - &cs.b_ineq).min() < -tol {
            continue;
        }
        return Some((candidate, active));
    }
    None
}

/// Closed-form projection of the belief onto the equality rows of `cs`.
///
/// The covariance collapses along the constraint rows:
/// `P^C = (I - gamma A) P`, symmetrized and clamped to PSD.
pub fn project_equality(
    belief: &GaussianBelief,
    cs: &ConstraintSet,
    w: &DMatrix<f64>,
) -> ProjectionResult {
    let n = belief.dim();
    if cs.a_eq.nrows() == 0 {
        return ProjectionResult {
            belief: belief.clone(),
            active_set: Vec::new(),
            gamma: DMatrix::zeros(n, 0),
            iterations: 0,
            status: ProjectionStatus::Projected,
        };
    }
    let w_inv = match w.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            return ProjectionResult {
                belief: belief.clone(),
                active_set: Vec::new(),
                gamma: DMatrix::zeros(n, 0),
                iterations: 0,
                status: ProjectionStatus::Infeasible,
            }
        }
    };
    match affine_project(&belief.mean, &cs.a_eq, &cs.b_eq, &w_inv) {
        Some(p) if (&cs.a_eq * &p.corrected - &cs.b_eq).amax() <= 1e-8 => {
            let mut result = GaussianBelief::new(
                p.corrected,
                (DMatrix::identity(n, n) - &p.gamma * &cs.a_eq) * &belief.cov,
            );
            result.enforce_psd();
            ProjectionResult {
                belief: result,
                active_set: Vec::new(),
                gamma: p.gamma,
                iterations: 1,
                status: ProjectionStatus::Projected,
            }
        }
        _ => ProjectionResult {
            belief: belief.clone(),
            active_set: Vec::new(),
            gamma: DMatrix::zeros(n, 0),
            iterations: 1,
            status: ProjectionStatus::Infeasible,
        },
    }
}

/// Projects the belief onto `A_eq x = b_eq`, `A_ineq x >= b_ineq` under
/// the metric `W` with a primal active-set method.
///
/// The mean solves the QP; the covariance is collapsed with the equality
/// rows only (active inequalities deliberately leave it untouched). An
/// infeasible constraint set returns the belief unprojected with the
/// status flag set, so callers can down-weight instead of aborting.
pub fn solve_constrained_qp(
    belief: &GaussianBelief,
    cs: &ConstraintSet,
    w: &DMatrix<f64>,
) -> ProjectionResult {
    const KKT_TOL: f64 = 1e-8;
    const MAX_CHANGES: usize = 100;

    if cs.a_ineq.nrows() == 0 {
        return project_equality(belief, cs, w);
    }
    let n = belief.dim();
    let infeasible = |iters: usize| ProjectionResult {
        belief: belief.clone(),
        active_set: Vec::new(),
        gamma: DMatrix::zeros(n, 0),
        iterations: iters,
        status: ProjectionStatus::Infeasible,
    };
    let w_inv = match w.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => return infeasible(0),
    };

    let n_eq = cs.a_eq.nrows();
    let mut working: Vec<usize> = Vec::new();
    let mut mean = belief.mean.clone();
    let mut iterations = 0;
    let mut status = ProjectionStatus::MaxIterations;

    while iterations < MAX_CHANGES {
        iterations += 1;
        // project onto the equality rows plus the working inequalities
        let (a, b) = stack_rows(cs, &working);
        let projected = if a.nrows() == 0 {
            Some(AffineProjection {
                corrected: belief.mean.clone(),
                gamma: DMatrix::zeros(n, 0),
                lambda: DVector::zeros(0),
            })
        } else {
            affine_project(&belief.mean, &a, &b, &w_inv)
        };
        // A failed or inconsistent working system means the greedy set
        // overshot; leave the loop and let the exhaustive pass sort it out.
        let Some(p) = projected else { break };
        if a.nrows() > 0 && (&a * &p.corrected - &b).amax() > KKT_TOL {
            break;
        }
        mean = p.corrected;

        // most violated inactive inequality enters the working set
        let resid = &cs.a_ineq * &mean - &cs.b_ineq;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..cs.a_ineq.nrows() {
            if working.contains(&i) {
                continue;
            }
            if resid[i] < -KKT_TOL && worst.map_or(true, |(_, v)| resid[i] < v) {
                worst = Some((i, resid[i]));
            }
        }
        if let Some((enter, _)) = worst {
            working.push(enter);
            continue;
        }

        // KKT multiplier signs: drop working rows pulling the wrong way
        if !working.is_empty() {
            let mut drop: Option<(usize, f64)> = None;
            for (k, _) in working.iter().enumerate() {
                let l = p.lambda[n_eq + k];
                if l > KKT_TOL && drop.map_or(true, |(_, v)| l > v) {
                    drop = Some((k, l));
                }
            }
            if let Some((k, _)) = drop {
                working.remove(k);
                continue;
            }
        }
        status = ProjectionStatus::Projected;
        break;
    }

    if status != ProjectionStatus::Projected {
        // The incremental loop can wedge itself on degenerate geometry;
        // the bounded exhaustive pass settles optimality or infeasibility.
        if let Some((x, active)) = exhaustive_active_set(&belief.mean, cs, &w_inv, KKT_TOL) {
            mean = x;
            working = active;
            status = ProjectionStatus::Projected;
        } else {
            let feasible = (&cs.a_eq * &mean - &cs.b_eq).amax() <= KKT_TOL
                && (&cs.a_ineq * &mean - &cs.b_ineq).min() >= -KKT_TOL;
            if !feasible {
                return infeasible(iterations);
            }
        }
    }

    // covariance from the equality rows only
    let (cov, gamma) = if n_eq > 0 {
        match affine_project(&belief.mean, &cs.a_eq, &cs.b_eq, &w_inv) {
            Some(p) => (
                (DMatrix::identity(n, n) - &p.gamma * &cs.a_eq) * &belief.cov,
                p.gamma,
            ),
            None => return infeasible(iterations),
        }
    } else {
        (belief.cov.clone(), DMatrix::zeros(n, 0))
    };
    let mut out = GaussianBelief::new(mean, cov);
    out.enforce_psd();
    working.sort_unstable();
    ProjectionResult {
        belief: out,
        active_set: working,
        gamma,
        iterations,
        status,
    }
}
