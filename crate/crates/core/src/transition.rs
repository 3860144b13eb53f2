//! Contact-conditioned linear transition model.
//!
//! Fixing the index sets of a contact state turns the step's enforced
//! complementarity rows into linear equalities. Eliminating the enforced
//! impulses from the Newton–Euler equation yields `v_{t+1} = A v_t + B u_t`
//! — an exact description of the LCP step whenever the contact state is the
//! realized one.

use nalgebra::{DMatrix, DVector};

use crate::contact_state::IndexSets;
use crate::dynamics::LcpSystem;
use crate::{Error, Result};

/// Linear step model `v_{t+1} = A v_t + B u` for one contact state.
#[derive(Debug, Clone)]
pub struct LinearTransition {
    /// Velocity propagation matrix (n_f x n_f).
    pub a: DMatrix<f64>,
    /// Input matrix over `u = [p_app; (gap/h)_alpha; 0; 0]`.
    pub b: DMatrix<f64>,
    /// The input vector itself.
    pub u: DVector<f64>,
    /// Stacked enforced-impulse Jacobian `[Gn_a, Gf_a, 0]` (n_f x |alpha|).
    pub h_mat: DMatrix<f64>,
    /// `[Gn_a^T M^-1; Gf_a^T M^-1; 0]` (|alpha| x n_f).
    pub f_mat: DMatrix<f64>,
    /// The alpha-restricted coupling matrix.
    pub k: DMatrix<f64>,
    /// Inverse of `k` actually used (pseudo-inverse when singular).
    pub k_inv: DMatrix<f64>,
    /// True when `k` was rank-deficient and the pseudo-inverse was used.
    pub regularized: bool,
    /// The index sets the model was conditioned on.
    pub idx: IndexSets,
    /// Step length of the originating system (s).
    pub h: f64,
}

impl LinearTransition {
    /// Predicted velocity `A v + B u`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v + &self.b * &self.u
    }

    /// Transition over the lifted state `x = [q; v]`:
    /// `x_{t+1} = T x_t + d` with `q_{t+1} = q_t + h v_{t+1}`.
    pub fn lifted(&self, h: f64) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.a.nrows();
        let bu = &self.b * &self.u;
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        t.view_mut((0, 0), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        t.view_mut((0, n), (n, n)).copy_from(&(&self.a * h));
        t.view_mut((n, n), (n, n)).copy_from(&self.a);
        let mut d = DVector::zeros(2 * n);
        d.rows_mut(0, n).copy_from(&(&bu * h));
        d.rows_mut(n, n).copy_from(&bu);
        (t, d)
    }
}

/// Derives the linear transition conditioned on the given index sets.
///
/// `K` is singular whenever the enforced rows are linearly dependent — a
/// sticking contact always is, since its two opposed friction rows are
/// negatives of each other — in which case the Moore-Penrose pseudo-inverse
/// (singular values below `1e-12 sigma_max` truncated) is used and flagged.
/// The pseudo-inverse keeps the enforced velocity rows exact: for
/// `K = G^T M^-1 G` the product `K K^+` projects onto `range(G^T)`, which
/// contains every attainable right-hand side.
pub fn derive_transition(sys: &LcpSystem, idx: &IndexSets) -> Result<LinearTransition> {
    let nf = sys.n_free_dofs();
    let c = sys.n_contacts();
    for &i in idx.alpha_n.iter().chain(&idx.beta_n).chain(&idx.alpha_s).chain(&idx.beta_s) {
        if i >= c {
            return Err(Error::DimensionMismatch(format!(
                "contact row {i} out of range for {c} contacts"
            )));
        }
    }
    for &j in idx.alpha_f.iter().chain(&idx.beta_f) {
        if j >= 2 * c {
            return Err(Error::DimensionMismatch(format!(
                "friction row {j} out of range for {c} contacts"
            )));
        }
    }

    let minv = sys
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DimensionMismatch("mass matrix not SPD".into()))?
        .inverse();

    let na = idx.alpha_n.len();
    let naf = idx.alpha_f.len();
    let nas = idx.alpha_s.len();
    let nalpha = na + naf + nas;

    // column selections of the enforced rows
    let gn_a = select_columns(&sys.g_n, &idx.alpha_n);
    let gf_a = select_columns(&sys.g_f, &idx.alpha_f);

    let mut h_mat = DMatrix::zeros(nf, nalpha);
    h_mat.view_mut((0, 0), (nf, na)).copy_from(&gn_a);
    h_mat.view_mut((0, na), (nf, naf)).copy_from(&gf_a);

    let mut f_mat = DMatrix::zeros(nalpha, nf);
    f_mat
        .view_mut((0, 0), (na, nf))
        .copy_from(&(gn_a.transpose() * &minv));
    f_mat
        .view_mut((na, 0), (naf, nf))
        .copy_from(&(gf_a.transpose() * &minv));

    let mut k = DMatrix::zeros(nalpha, nalpha);
    k.view_mut((0, 0), (na, na))
        .copy_from(&(gn_a.transpose() * &minv * &gn_a));
    k.view_mut((0, na), (na, naf))
        .copy_from(&(gn_a.transpose() * &minv * &gf_a));
    k.view_mut((na, 0), (naf, na))
        .copy_from(&(gf_a.transpose() * &minv * &gn_a));
    k.view_mut((na, na), (naf, naf))
        .copy_from(&(gf_a.transpose() * &minv * &gf_a));
    for (col, &si) in idx.alpha_s.iter().enumerate() {
        for (row, &fj) in idx.alpha_f.iter().enumerate() {
            k[(na + row, na + naf + col)] = sys.e[(fj, si)];
        }
        for (jcol, &ni) in idx.alpha_n.iter().enumerate() {
            k[(na + naf + col, jcol)] = sys.u[(si, ni)];
        }
        for (jcol, &fj) in idx.alpha_f.iter().enumerate() {
            k[(na + naf + col, na + jcol)] = -sys.e[(fj, si)];
        }
    }

    let (k_inv, regularized) = invert_or_regularize(&k);

    let a = DMatrix::identity(nf, nf) - &minv * &h_mat * &k_inv * &f_mat * &sys.m;
    let mut b = DMatrix::zeros(nf, nf + nalpha);
    b.view_mut((0, 0), (nf, nf))
        .copy_from(&(&minv * (DMatrix::identity(nf, nf) - &h_mat * &k_inv * &f_mat)));
    b.view_mut((0, nf), (nf, nalpha))
        .copy_from(&(-(&minv * &h_mat * &k_inv)));

    let mut u = DVector::zeros(nf + nalpha);
    u.rows_mut(0, nf).copy_from(&sys.p_app);
    for (row, &ni) in idx.alpha_n.iter().enumerate() {
        u[nf + row] = sys.b_n[ni];
    }
    for (row, &fj) in idx.alpha_f.iter().enumerate() {
        u[nf + na + row] = sys.b_f[fj];
    }

    Ok(LinearTransition {
        a,
        b,
        u,
        h_mat,
        f_mat,
        k,
        k_inv,
        regularized,
        idx: idx.clone(),
        h: sys.h,
    })
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols.len());
    for (j, &c) in cols.iter().enumerate() {
        out.column_mut(j).copy_from(&m.column(c));
    }
    out
}

fn invert_or_regularize(k: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = k.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let svd = k.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax > 0.0 && smin > 1e-12 * smax {
        if let Some(inv) = k.clone().try_inverse() {
            return (inv, false);
        }
    }
    let eps = (1e-12 * smax).max(f64::MIN_POSITIVE);
    let inv = svd
        .pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(n, n));
    (inv, true)
}
