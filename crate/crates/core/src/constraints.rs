//! Constraint sets a contact state imposes on the lifted state `x = [q; v]`.
//!
//! A fixed contact state splits the step's complementarity rows into
//! enforced equalities and remaining inequalities. Half of them mention the
//! post-step velocity directly and bind `x_{t+1}`; the other half mention
//! the step's impulses, which are themselves linear in `x_t`, and therefore
//! bind `x_t` retroactively. Both kinds are produced here as `(A, b)` pairs
//! for the QP projection of the estimation layer.

use nalgebra::{DMatrix, DVector};

use crate::contact_state::IndexSets;
use crate::dynamics::LcpSystem;
use crate::transition::LinearTransition;

/// Rows with an infinity norm below this are vacuous and dropped.
const VACUOUS_TOL: f64 = 1e-12;
/// Relative threshold for pruning linearly dependent equality rows.
const RANK_TOL: f64 = 1e-10;

/// Which state vector a constraint set binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binds {
    /// The post-step state `x_{t+1}`.
    CurrentState,
    /// The pre-step state `x_t`, revised by the new contact state.
    PreviousState,
}

/// Linear constraints `A_eq x = b_eq`, `A_ineq x >= b_ineq` over `[q; v]`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub binds: Binds,
    /// Caller-assigned identifier of the originating contact state.
    pub provenance: u64,
}

impl ConstraintSet {
    pub fn empty(dim: usize, binds: Binds) -> Self {
        ConstraintSet {
            a_eq: DMatrix::zeros(0, dim),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, dim),
            b_ineq: DVector::zeros(0),
            binds,
            provenance: 0,
        }
    }

    /// True when there is nothing to enforce.
    pub fn is_trivial(&self) -> bool {
        self.a_eq.nrows() == 0 && self.a_ineq.nrows() == 0
    }

    /// Largest equality residual `|A_eq x - b_eq|` at `x`.
    pub fn eq_residual(&self, x: &DVector<f64>) -> f64 {
        if self.a_eq.nrows() == 0 {
            return 0.0;
        }
        (&self.a_eq * x - &self.b_eq).amax()
    }

    /// Worst inequality violation at `x` (0 when feasible).
    pub fn ineq_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        if self.a_ineq.nrows() > 0 {
            let r = &self.a_ineq * x - &self.b_ineq;
            for v in r.iter() {
                worst = worst.max(-v);
            }
        }
        worst
    }
}

/// Linear expression of the step's impulse vector in the pre-step state:
/// `[p_n; p_f; sigma]_{t+1} = L x_t + c` under a fixed index set.
///
/// Rows of impulses pinned to zero by the contact state (the beta rows)
/// are identically zero.
#[derive(Debug, Clone)]
pub struct ImpulseExpression {
    pub l: DMatrix<f64>,
    pub c: DVector<f64>,
    n_contacts: usize,
}

impl ImpulseExpression {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.l * x + &self.c
    }

    pub fn n_contacts(&self) -> usize {
        self.n_contacts
    }

    /// Row index of `p_n` for contact `i`.
    pub fn row_pn(&self, i: usize) -> usize {
        i
    }

    /// Row index of friction row `j` (global `2i`/`2i+1` indexing).
    pub fn row_pf(&self, j: usize) -> usize {
        self.n_contacts + j
    }

    /// Row index of `sigma` for contact `i`.
    pub fn row_sigma(&self, i: usize) -> usize {
        3 * self.n_contacts + i
    }
}

/// Expresses the enforced impulses linearly in `x_t`.
///
/// The enforced equality rows give `K y = -F (M v_t + p_app) - c0` with
/// `c0` the stabilization constants, so `y = L_v v_t + c` with the same
/// (possibly regularized) `K` inverse as the transition model.
///
/// A sticking contact's two opposed friction rows are dependent, which
/// makes the regularized solve split the net friction impulse evenly with
/// one negative half. The pair is therefore re-expressed one-sided: the
/// whole net-impulse row is assigned to the direction that is nonnegative
/// at the reference velocity `sys.v_t`, and the opposite row is zeroed.
/// This keeps the expression linear, nonnegative where the contact state
/// says impulses live, and equal to the solver's own one-sided solution.
pub fn impulse_expression(sys: &LcpSystem, tr: &LinearTransition) -> ImpulseExpression {
    let nf = sys.n_free_dofs();
    let c = sys.n_contacts();
    let idx = &tr.idx;
    let na = idx.alpha_n.len();
    let naf = idx.alpha_f.len();
    let nalpha = tr.k.nrows();

    let mut l = DMatrix::zeros(4 * c, 2 * nf);
    let mut offs = DVector::zeros(4 * c);
    if nalpha == 0 {
        return ImpulseExpression {
            l,
            c: offs,
            n_contacts: c,
        };
    }

    // y = -K^-1 F M v_t - K^-1 (F p_app + c0)
    let lv = -(&tr.k_inv * &tr.f_mat * &sys.m);
    let mut c0 = DVector::zeros(nalpha);
    for (row, &ni) in idx.alpha_n.iter().enumerate() {
        c0[row] = sys.b_n[ni];
    }
    for (row, &fj) in idx.alpha_f.iter().enumerate() {
        c0[na + row] = sys.b_f[fj];
    }
    let coffs = -(&tr.k_inv * (&tr.f_mat * &sys.p_app + c0));

    let mut scatter = |alpha_row: usize, full_row: usize| {
        l.view_mut((full_row, nf), (1, nf))
            .copy_from(&lv.row(alpha_row));
        offs[full_row] = coffs[alpha_row];
    };
    for (row, &ni) in idx.alpha_n.iter().enumerate() {
        scatter(row, ni);
    }
    for (row, &fj) in idx.alpha_f.iter().enumerate() {
        scatter(na + row, c + fj);
    }
    for (row, &si) in idx.alpha_s.iter().enumerate() {
        scatter(na + naf + row, 3 * c + si);
    }

    // one-sided rewrite of sticking friction pairs
    for i in 0..c {
        let both_enforced =
            idx.alpha_f.contains(&(2 * i)) && idx.alpha_f.contains(&(2 * i + 1));
        if !both_enforced || idx.alpha_s.contains(&i) {
            continue;
        }
        let rp = c + 2 * i;
        let rm = c + 2 * i + 1;
        let net_l = l.row(rp) - l.row(rm);
        let net_c = offs[rp] - offs[rm];
        let at_ref = net_l.columns(nf, nf).transpose().dot(&sys.v_t) + net_c;
        if at_ref >= 0.0 {
            l.row_mut(rp).copy_from(&net_l);
            offs[rp] = net_c;
            l.row_mut(rm).fill(0.0);
            offs[rm] = 0.0;
        } else {
            l.row_mut(rm).copy_from(&(-&net_l));
            offs[rm] = -net_c;
            l.row_mut(rp).fill(0.0);
            offs[rp] = 0.0;
        }
    }

    ImpulseExpression {
        l,
        c: offs,
        n_contacts: c,
    }
}

/// Constraints on `x_{t+1}`: the enforced contact-velocity equalities and
/// the remaining separation inequalities.
///
/// `x_prev_mean` fixes the evaluation point of the slip-speed terms
/// `sigma_{t+1}(x_t)` appearing in the right-hand sides.
///
/// Friction inequality rows are emitted only for contacts whose slip
/// variable is enforced (sliding contacts' passive direction): for a
/// separated contact the slip slack absorbs any tangential motion, so its
/// friction rows constrain nothing about `v_{t+1}`.
pub fn build_current(
    sys: &LcpSystem,
    idx: &IndexSets,
    expr: &ImpulseExpression,
    x_prev_mean: &DVector<f64>,
) -> ConstraintSet {
    let nf = sys.n_free_dofs();
    let dim = 2 * nf;
    let impulses = expr.eval(x_prev_mean);
    let sigma_at = |i: usize| impulses[expr.row_sigma(i)];

    // Linearized separation at the end of the step, used for the
    // position-level rows: with q_{t+1} = q_t + h v_{t+1} the enforced
    // normal row is equivalent to gap(q_{t+1}) = 0 to first order, and the
    // excluded rows to gap(q_{t+1}) >= 0. Both are exact identities of the
    // stepping scheme, and they are what keeps a projected pose estimate
    // out of the geometry (the velocity rows alone cannot restore a pose
    // that measurement noise pulled inside).
    let gap_row = |i: usize| -> (DVector<f64>, f64) {
        let mut row = DVector::zeros(dim);
        row.rows_mut(0, nf).copy_from(&sys.g_n.column(i));
        let b = sys.g_n.column(i).dot(&sys.q_t) - sys.h * sys.b_n[i];
        (row, b)
    };

    let mut a_eq_rows: Vec<DVector<f64>> = Vec::new();
    let mut b_eq: Vec<f64> = Vec::new();
    for &i in &idx.alpha_n {
        let mut row = DVector::zeros(dim);
        row.rows_mut(nf, nf).copy_from(&sys.g_n.column(i));
        a_eq_rows.push(row);
        b_eq.push(-sys.b_n[i]);
        let (row, b) = gap_row(i);
        a_eq_rows.push(row);
        b_eq.push(b);
    }
    for &j in &idx.alpha_f {
        let i = j / 2;
        let mut row = DVector::zeros(dim);
        row.rows_mut(nf, nf).copy_from(&sys.g_f.column(j));
        let sigma = if idx.alpha_s.contains(&i) { sigma_at(i) } else { 0.0 };
        a_eq_rows.push(row);
        b_eq.push(-sigma - sys.b_f[j]);
    }

    let mut a_ineq_rows: Vec<DVector<f64>> = Vec::new();
    let mut b_ineq: Vec<f64> = Vec::new();
    for &i in &idx.beta_n {
        let mut row = DVector::zeros(dim);
        row.rows_mut(nf, nf).copy_from(&sys.g_n.column(i));
        a_ineq_rows.push(row);
        b_ineq.push(-sys.b_n[i]);
        let (row, b) = gap_row(i);
        a_ineq_rows.push(row);
        b_ineq.push(b);
    }
    for &j in &idx.beta_f {
        let i = j / 2;
        if !idx.alpha_s.contains(&i) {
            continue;
        }
        let mut row = DVector::zeros(dim);
        row.rows_mut(nf, nf).copy_from(&sys.g_f.column(j));
        a_ineq_rows.push(row);
        b_ineq.push(-sigma_at(i) - sys.b_f[j]);
    }

    finish(a_eq_rows, b_eq, a_ineq_rows, b_ineq, dim, Binds::CurrentState)
}

/// Constraints the new contact state imposes retroactively on `x_t`,
/// composed from the impulse expression: cone saturation equalities for
/// sliding contacts, and nonnegativity/cone-interior inequalities.
///
/// Zero-impulse rows of separated contacts compose to identically zero
/// rows and are dropped as vacuous.
pub fn build_previous(
    sys: &LcpSystem,
    idx: &IndexSets,
    expr: &ImpulseExpression,
) -> ConstraintSet {
    let nf = sys.n_free_dofs();
    let dim = 2 * nf;
    let c = sys.n_contacts();

    let expr_row = |r: usize| -> (DVector<f64>, f64) {
        (expr.l.row(r).transpose(), expr.c[r])
    };
    // mu p_n - sum of the contact's friction impulses, as a linear row
    let cone_row = |i: usize| -> (DVector<f64>, f64) {
        let (pn_l, pn_c) = expr_row(expr.row_pn(i));
        let (fp_l, fp_c) = expr_row(expr.row_pf(2 * i));
        let (fm_l, fm_c) = expr_row(expr.row_pf(2 * i + 1));
        let row = pn_l * sys.u[(i, i)] - fp_l - fm_l;
        let off = pn_c * sys.u[(i, i)] - fp_c - fm_c;
        (row, off)
    };

    let mut a_eq_rows: Vec<DVector<f64>> = Vec::new();
    let mut b_eq: Vec<f64> = Vec::new();
    // cone saturation for enforced slip rows
    for &i in &idx.alpha_s {
        let (row, off) = cone_row(i);
        a_eq_rows.push(row);
        b_eq.push(-off);
    }
    // zero-impulse rows for the excluded contacts (vacuous by construction)
    for &i in &idx.beta_n {
        let (row, off) = expr_row(expr.row_pn(i));
        a_eq_rows.push(row);
        b_eq.push(-off);
    }
    for &j in &idx.beta_f {
        let (row, off) = expr_row(expr.row_pf(j));
        a_eq_rows.push(row);
        b_eq.push(-off);
    }
    for &i in &idx.beta_s {
        let (row, off) = expr_row(expr.row_sigma(i));
        a_eq_rows.push(row);
        b_eq.push(-off);
    }

    let mut a_ineq_rows: Vec<DVector<f64>> = Vec::new();
    let mut b_ineq: Vec<f64> = Vec::new();
    // cone interior for contacts whose slip row is excluded
    for &i in &idx.beta_s {
        if i >= c {
            continue;
        }
        let (row, off) = cone_row(i);
        a_ineq_rows.push(row);
        b_ineq.push(-off);
    }
    // enforced impulses stay nonnegative
    for &i in &idx.alpha_n {
        let (row, off) = expr_row(expr.row_pn(i));
        a_ineq_rows.push(row);
        b_ineq.push(-off);
    }
    for &j in &idx.alpha_f {
        let (row, off) = expr_row(expr.row_pf(j));
        a_ineq_rows.push(row);
        b_ineq.push(-off);
    }
    for &i in &idx.alpha_s {
        let (row, off) = expr_row(expr.row_sigma(i));
        a_ineq_rows.push(row);
        b_ineq.push(-off);
    }

    finish(a_eq_rows, b_eq, a_ineq_rows, b_ineq, dim, Binds::PreviousState)
}

/// Normalizes rows, drops vacuous ones, prunes dependent equality rows,
/// and packs everything into a `ConstraintSet`.
fn finish(
    a_eq_rows: Vec<DVector<f64>>,
    b_eq: Vec<f64>,
    a_ineq_rows: Vec<DVector<f64>>,
    b_ineq: Vec<f64>,
    dim: usize,
    binds: Binds,
) -> ConstraintSet {
    let (eq_rows, eq_rhs) = normalize(a_eq_rows, b_eq);
    let (eq_rows, eq_rhs) = prune_dependent(eq_rows, eq_rhs);
    let (ineq_rows, ineq_rhs) = normalize(a_ineq_rows, b_ineq);
    ConstraintSet {
        a_eq: rows_to_matrix(&eq_rows, dim),
        b_eq: DVector::from_vec(eq_rhs),
        a_ineq: rows_to_matrix(&ineq_rows, dim),
        b_ineq: DVector::from_vec(ineq_rhs),
        binds,
        provenance: 0,
    }
}

fn normalize(rows: Vec<DVector<f64>>, rhs: Vec<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut out_rows = Vec::with_capacity(rows.len());
    let mut out_rhs = Vec::with_capacity(rhs.len());
    for (row, b) in rows.into_iter().zip(rhs) {
        let scale = row.amax();
        if scale < VACUOUS_TOL {
            continue;
        }
        out_rows.push(row / scale);
        out_rhs.push(b / scale);
    }
    (out_rows, out_rhs)
}

/// Greedy rank-revealing selection: keeps rows whose component orthogonal
/// to the already-kept span exceeds the relative threshold.
fn prune_dependent(rows: Vec<DVector<f64>>, rhs: Vec<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    if rows.is_empty() {
        return (rows, rhs);
    }
    let smax = {
        let dim = rows[0].len();
        let a = rows_to_matrix(&rows, dim);
        a.svd(false, false).singular_values.max()
    };
    let thresh = RANK_TOL * smax;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out_rows = Vec::new();
    let mut out_rhs = Vec::new();
    for (row, b) in rows.into_iter().zip(rhs) {
        let mut r = row.clone();
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        if r.norm() > thresh {
            basis.push(&r / r.norm());
            out_rows.push(row);
            out_rhs.push(b);
        }
    }
    (out_rows, out_rhs)
}

fn rows_to_matrix(rows: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), dim);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(&r.transpose());
    }
    m
}
