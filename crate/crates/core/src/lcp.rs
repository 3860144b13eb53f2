//! Mixed LCP solver: Lemke complementary pivoting with a projected
//! Gauss–Seidel fallback.
//!
//! The time-stepping problem couples the Newton–Euler equations with
//! complementarity conditions on normal impulses, friction impulses and slip
//! slack variables. Velocities and bilateral joint impulses are free
//! variables; they are eliminated first, leaving a standard LCP
//! `w = N z + r, 0 <= w  ⟂  z >= 0` over `z = [p_n; p_f; sigma]`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::LcpSystem;

/// Pivot tolerance for Lemke's method.
const PIVOT_TOL: f64 = 1e-10;
/// Componentwise nonnegativity tolerance on the two paired vectors.
pub const TOL_NEG: f64 = 1e-10;
/// Default complementarity tolerance.
pub const TOL_COMP: f64 = 1e-8;
/// Sweeps of the projected Gauss–Seidel fallback.
const PGS_SWEEPS: usize = 500;

/// Which path produced the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Lemke's method terminated with a complementary basis.
    Solved,
    /// Lemke ran out of pivots (or hit a secondary ray) and the
    /// Gauss–Seidel fallback met the tolerances instead.
    MaxIterations,
    /// Neither path met the tolerances.
    Infeasible,
}

/// Full solution of the mixed LCP, including slack variables.
#[derive(Debug, Clone)]
pub struct LcpSolution {
    /// Velocities of the free bodies after the step.
    pub v_next: DVector<f64>,
    /// Bilateral joint impulses.
    pub p_b: DVector<f64>,
    /// Normal impulses, one per contact.
    pub p_n: DVector<f64>,
    /// Friction impulses, two opposed directions per contact.
    pub p_f: DVector<f64>,
    /// Slip-speed slack variables, one per contact.
    pub sigma: DVector<f64>,
    /// Normal separation slacks (gap rate after stabilization).
    pub rho_n: DVector<f64>,
    /// Friction slacks.
    pub rho_f: DVector<f64>,
    /// Friction-cone slacks `mu p_n - e^T p_f`.
    pub s: DVector<f64>,
    pub status: SolveStatus,
}

impl LcpSolution {
    /// Largest complementarity product over all paired components.
    pub fn complementarity_residual(&self) -> f64 {
        let pairs = [
            (&self.p_n, &self.rho_n),
            (&self.p_f, &self.rho_f),
            (&self.sigma, &self.s),
        ];
        let mut worst: f64 = 0.0;
        for (z, w) in pairs {
            for i in 0..z.len() {
                worst = worst.max((z[i] * w[i]).abs());
            }
        }
        worst
    }

    /// Most negative component over all paired vectors (0 when clean).
    pub fn negativity(&self) -> f64 {
        let vs = [
            &self.p_n, &self.p_f, &self.sigma, &self.rho_n, &self.rho_f, &self.s,
        ];
        vs.iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |acc, &x| acc.min(x))
    }
}

/// Eliminates velocities (and joint impulses) from the mixed problem:
/// returns `W` such that `v_next = v_free + W (G_n p_n + G_f p_f)`, together
/// with `v_free`, the velocity the system would take with zero contact
/// impulses.
pub(crate) fn effective_inverse(sys: &LcpSystem) -> (DMatrix<f64>, DVector<f64>) {
    let minv = sys
        .m
        .clone()
        .cholesky()
        .expect("mass matrix must be positive definite")
        .inverse();
    let momentum = &sys.m * &sys.v_t + &sys.p_app;
    if sys.g_b.ncols() == 0 {
        let v_free = &minv * &momentum;
        return (minv, v_free);
    }
    // project onto the joint-feasible subspace: the KKT system
    // [M  -G_b; G_b^T  0] [v; p_b] = [momentum; 0]
    let gb = &sys.g_b;
    let s = (gb.transpose() * &minv * gb)
        .cholesky()
        .expect("joint Jacobian must have full column rank")
        .inverse();
    let proj = &minv * gb * s * gb.transpose() * &minv;
    let w = &minv - &proj;
    let v_free = &w * momentum;
    (w, v_free)
}

/// Builds the reduced standard LCP `w = N z + r` over
/// `z = [p_n; p_f; sigma]` by eliminating free variables.
pub fn reduced_lcp(sys: &LcpSystem) -> (DMatrix<f64>, DVector<f64>) {
    let (w_inv, v_free) = effective_inverse(sys);
    reduced_lcp_with(sys, &w_inv, &v_free)
}

fn reduced_lcp_with(
    sys: &LcpSystem,
    w_inv: &DMatrix<f64>,
    v_free: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let c = sys.g_n.ncols();
    let m = 4 * c;
    let mut n = DMatrix::zeros(m, m);
    let mut r = DVector::zeros(m);
    if c == 0 {
        return (n, r);
    }
    let gn_w = sys.g_n.transpose() * w_inv;
    let gf_w = sys.g_f.transpose() * w_inv;
    n.view_mut((0, 0), (c, c)).copy_from(&(&gn_w * &sys.g_n));
    n.view_mut((0, c), (c, 2 * c)).copy_from(&(&gn_w * &sys.g_f));
    n.view_mut((c, 0), (2 * c, c)).copy_from(&(&gf_w * &sys.g_n));
    n.view_mut((c, c), (2 * c, 2 * c))
        .copy_from(&(&gf_w * &sys.g_f));
    n.view_mut((c, 3 * c), (2 * c, c)).copy_from(&sys.e);
    n.view_mut((3 * c, 0), (c, c)).copy_from(&sys.u);
    n.view_mut((3 * c, c), (c, 2 * c))
        .copy_from(&(-sys.e.transpose()));
    r.rows_mut(0, c)
        .copy_from(&(sys.g_n.transpose() * v_free + &sys.b_n));
    r.rows_mut(c, 2 * c)
        .copy_from(&(sys.g_f.transpose() * v_free + &sys.b_f));
    (n, r)
}

/// Solves the mixed LCP of a time step.
///
/// Tries Lemke's method on the reduced problem first; if that fails to
/// produce a solution within tolerance, runs a projected Gauss–Seidel
/// sweep over the contacts. The returned status records which path
/// succeeded (see [`SolveStatus`]).
pub fn solve(sys: &LcpSystem, tol_comp: f64, max_iter: usize) -> LcpSolution {
    let (w_inv, v_free) = effective_inverse(sys);
    let c = sys.g_n.ncols();
    if c == 0 {
        let v_next = v_free.clone();
        let p_b = recover_joint_impulses(sys, &v_next, &DVector::zeros(0), &DVector::zeros(0));
        return LcpSolution {
            v_next,
            p_b,
            p_n: DVector::zeros(0),
            p_f: DVector::zeros(0),
            sigma: DVector::zeros(0),
            rho_n: DVector::zeros(0),
            rho_f: DVector::zeros(0),
            s: DVector::zeros(0),
            status: SolveStatus::Solved,
        };
    }

    let (n, r) = reduced_lcp_with(sys, &w_inv, &v_free);
    if let Some(z) = lemke(&n, &r, max_iter) {
        let sol = assemble_solution(sys, &w_inv, &v_free, &n, &r, &z, SolveStatus::Solved);
        if sol.complementarity_residual() <= tol_comp && sol.negativity() >= -TOL_NEG {
            return sol;
        }
    }

    // fallback: projected Gauss-Seidel in signed-friction space
    let z = pgs(sys, &w_inv, &v_free);
    let sol = assemble_solution(sys, &w_inv, &v_free, &n, &r, &z, SolveStatus::MaxIterations);
    if sol.complementarity_residual() <= tol_comp && sol.negativity() >= -TOL_NEG {
        return sol;
    }
    LcpSolution {
        status: SolveStatus::Infeasible,
        ..sol
    }
}

fn assemble_solution(
    sys: &LcpSystem,
    w_inv: &DMatrix<f64>,
    v_free: &DVector<f64>,
    n: &DMatrix<f64>,
    r: &DVector<f64>,
    z: &DVector<f64>,
    status: SolveStatus,
) -> LcpSolution {
    let c = sys.g_n.ncols();
    let w = n * z + r;
    let p_n = DVector::from_fn(c, |i, _| z[i]);
    let p_f = DVector::from_fn(2 * c, |i, _| z[c + i]);
    let sigma = DVector::from_fn(c, |i, _| z[3 * c + i]);
    let v_next = v_free + w_inv * (&sys.g_n * &p_n + &sys.g_f * &p_f);
    let p_b = recover_joint_impulses(sys, &v_next, &p_n, &p_f);
    LcpSolution {
        v_next,
        p_b,
        rho_n: DVector::from_fn(c, |i, _| w[i]),
        rho_f: DVector::from_fn(2 * c, |i, _| w[c + i]),
        s: DVector::from_fn(c, |i, _| w[3 * c + i]),
        p_n,
        p_f,
        sigma,
        status,
    }
}

/// Least-squares recovery of joint impulses from the Newton–Euler residual.
fn recover_joint_impulses(
    sys: &LcpSystem,
    v_next: &DVector<f64>,
    p_n: &DVector<f64>,
    p_f: &DVector<f64>,
) -> DVector<f64> {
    let nj = sys.g_b.ncols();
    if nj == 0 {
        return DVector::zeros(0);
    }
    let rhs =
        &sys.m * v_next - &sys.m * &sys.v_t - &sys.p_app - &sys.g_n * p_n - &sys.g_f * p_f;
    let gtg = sys.g_b.transpose() * &sys.g_b;
    gtg.cholesky()
        .expect("joint Jacobian must have full column rank")
        .solve(&(sys.g_b.transpose() * rhs))
}

/// Lemke's complementary pivoting with an all-ones covering vector.
///
/// Returns `None` on ray termination or when `max_iter` pivots are
/// exhausted.
fn lemke(n: &DMatrix<f64>, r: &DVector<f64>, max_iter: usize) -> Option<DVector<f64>> {
    let m = r.len();
    if m == 0 {
        return Some(DVector::zeros(0));
    }
    if r.min() >= 0.0 {
        return Some(DVector::zeros(m));
    }

    // tableau columns: [w_0..w_m | z_0..z_m | z0 | rhs]
    let z0_col = 2 * m;
    let rhs_col = 2 * m + 1;
    let mut t = DMatrix::zeros(m, 2 * m + 2);
    for i in 0..m {
        t[(i, i)] = 1.0;
        t[(i, z0_col)] = -1.0;
        t[(i, rhs_col)] = r[i];
        for j in 0..m {
            t[(i, m + j)] = -n[(i, j)];
        }
    }
    let mut basis: Vec<usize> = (0..m).collect();

    // bring z0 in at the most negative rhs
    let mut row = 0;
    for i in 1..m {
        if t[(i, rhs_col)] < t[(row, rhs_col)] {
            row = i;
        }
    }
    pivot(&mut t, row, z0_col);
    let mut leaving = basis[row];
    basis[row] = z0_col;

    for _ in 0..max_iter {
        // entering variable: complement of the one that just left
        let entering = if leaving < m { leaving + m } else { leaving - m };

        // minimum-ratio test; prefer the z0 row on ties so z0 can exit
        let mut best = f64::INFINITY;
        for i in 0..m {
            let a = t[(i, entering)];
            if a > PIVOT_TOL {
                best = best.min(t[(i, rhs_col)] / a);
            }
        }
        if !best.is_finite() {
            return None; // secondary ray
        }
        let mut row = None;
        for i in 0..m {
            let a = t[(i, entering)];
            if a > PIVOT_TOL && t[(i, rhs_col)] / a <= best + 1e-9 {
                if basis[i] == z0_col {
                    row = Some(i);
                    break;
                }
                if row.is_none() {
                    row = Some(i);
                }
            }
        }
        let row = row?;
        pivot(&mut t, row, entering);
        leaving = basis[row];
        basis[row] = entering;
        if leaving == z0_col {
            let mut z = DVector::zeros(m);
            for (i, &b) in basis.iter().enumerate() {
                if (m..2 * m).contains(&b) {
                    z[b - m] = t[(i, rhs_col)].max(0.0);
                }
            }
            return Some(z);
        }
    }
    None
}

fn pivot(t: &mut DMatrix<f64>, row: usize, col: usize) {
    let piv = t[(row, col)];
    let ncols = t.ncols();
    for j in 0..ncols {
        t[(row, j)] /= piv;
    }
    for i in 0..t.nrows() {
        if i == row {
            continue;
        }
        let f = t[(i, col)];
        if f != 0.0 {
            for j in 0..ncols {
                t[(i, j)] -= f * t[(row, j)];
            }
        }
    }
}

/// Projected Gauss–Seidel over per-contact normal and signed friction
/// impulses, converted back to the two-direction formulation.
fn pgs(sys: &LcpSystem, w_inv: &DMatrix<f64>, v_free: &DVector<f64>) -> DVector<f64> {
    let c = sys.g_n.ncols();
    let mut v = v_free.clone();
    let mut p_n = vec![0.0; c];
    let mut p_t = vec![0.0; c]; // signed impulse along the +tangent column

    let gn_cols: Vec<DVector<f64>> = (0..c).map(|i| sys.g_n.column(i).into_owned()).collect();
    let gt_cols: Vec<DVector<f64>> =
        (0..c).map(|i| sys.g_f.column(2 * i).into_owned()).collect();
    let wgn: Vec<DVector<f64>> = gn_cols.iter().map(|g| w_inv * g).collect();
    let wgt: Vec<DVector<f64>> = gt_cols.iter().map(|g| w_inv * g).collect();
    let dn: Vec<f64> = (0..c).map(|i| gn_cols[i].dot(&wgn[i])).collect();
    let dt: Vec<f64> = (0..c).map(|i| gt_cols[i].dot(&wgt[i])).collect();

    for _ in 0..PGS_SWEEPS {
        for i in 0..c {
            if dn[i] > 0.0 {
                let res = gn_cols[i].dot(&v) + sys.b_n[i];
                let new = (p_n[i] - res / dn[i]).max(0.0);
                let dp = new - p_n[i];
                if dp != 0.0 {
                    v += &wgn[i] * dp;
                    p_n[i] = new;
                }
            }
            if dt[i] > 0.0 {
                let res = gt_cols[i].dot(&v) + sys.b_f[2 * i];
                let bound = sys.u[(i, i)] * p_n[i];
                let new = (p_t[i] - res / dt[i]).clamp(-bound, bound);
                let dp = new - p_t[i];
                if dp != 0.0 {
                    v += &wgt[i] * dp;
                    p_t[i] = new;
                }
            }
        }
    }

    let mut z = DVector::zeros(4 * c);
    for i in 0..c {
        z[i] = p_n[i];
        if p_t[i] >= 0.0 {
            z[c + 2 * i] = p_t[i];
        } else {
            z[c + 2 * i + 1] = -p_t[i];
        }
        let slip = gt_cols[i].dot(&v) + sys.b_f[2 * i];
        z[3 * c + i] = slip.abs();
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LcpSystem;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    /// 1-DOF system: mass on a line with one contact, normal along +x.
    fn scalar_system(v0: f64, gap: f64, p_app: f64, mu: f64, h: f64) -> LcpSystem {
        LcpSystem {
            m: dmatrix![1.0],
            g_n: dmatrix![1.0],
            g_f: DMatrix::zeros(1, 2),
            g_b: DMatrix::zeros(1, 0),
            e: dmatrix![1.0; 1.0],
            u: dmatrix![mu],
            gaps: dvector![gap],
            b_n: dvector![gap / h],
            b_f: dvector![0.0, 0.0],
            p_app: dvector![p_app],
            v_t: dvector![v0],
            q_t: dvector![gap],
            h,
            candidates: Vec::new(),
            free_bodies: Vec::new(),
        }
    }

    #[test]
    fn no_contacts_is_unconstrained() {
        let mut sys = scalar_system(0.0, 0.0, -0.5, 0.0, 0.01);
        sys.g_n = DMatrix::zeros(1, 0);
        sys.g_f = DMatrix::zeros(1, 0);
        sys.e = DMatrix::zeros(0, 0);
        sys.u = DMatrix::zeros(0, 0);
        sys.gaps = dvector![];
        sys.b_n = dvector![];
        sys.b_f = dvector![];
        sys.v_t = dvector![2.0];
        let sol = solve(&sys, TOL_COMP, 100);
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.v_next[0], 1.5, epsilon = 1e-12);
        assert!(sol.p_n.is_empty());
    }

    #[test]
    fn falling_mass_stops_on_floor() {
        // falling at -1 m/s, gap 0, gravity impulse -0.0981 over h = 0.01
        let sys = scalar_system(-1.0, 0.0, -0.0981, 0.0, 0.01);
        let sol = solve(&sys, TOL_COMP, 100);
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.p_n[0], 1.0981, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.v_next[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn separated_contact_gets_no_impulse() {
        let sys = scalar_system(-0.1, 0.1, 0.0, 0.0, 0.01);
        let sol = solve(&sys, TOL_COMP, 100);
        assert_eq!(sol.status, SolveStatus::Solved);
        assert_abs_diff_eq!(sol.p_n[0], 0.0, epsilon = 1e-12);
        assert!(sol.rho_n[0] > 0.0);
    }

    #[test]
    fn solution_invariants_hold() {
        let sys = scalar_system(-2.0, -0.001, -0.0981, 0.5, 0.01);
        let sol = solve(&sys, TOL_COMP, 100);
        assert!(sol.complementarity_residual() <= TOL_COMP);
        assert!(sol.negativity() >= -TOL_NEG);
        // Newton-Euler row residual
        let res = (&sys.m * &sol.v_next
            - &sys.m * &sys.v_t
            - &sys.p_app
            - &sys.g_n * &sol.p_n
            - &sys.g_f * &sol.p_f)
            .norm();
        assert!(res <= 1e-8);
    }

    #[test]
    fn bilateral_joint_pins_a_dof() {
        // two DOFs tied together by a joint row [1, -1]: equal velocities
        let sys = LcpSystem {
            m: dmatrix![1.0, 0.0; 0.0, 1.0],
            g_n: DMatrix::zeros(2, 0),
            g_f: DMatrix::zeros(2, 0),
            g_b: dmatrix![1.0; -1.0],
            e: DMatrix::zeros(0, 0),
            u: DMatrix::zeros(0, 0),
            gaps: dvector![],
            b_n: dvector![],
            b_f: dvector![],
            p_app: dvector![1.0, 0.0],
            v_t: dvector![0.0, 0.0],
            q_t: dvector![0.0, 0.0],
            h: 0.01,
            candidates: Vec::new(),
            free_bodies: Vec::new(),
        };
        let sol = solve(&sys, TOL_COMP, 100);
        assert_abs_diff_eq!(sol.v_next[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.v_next[1], 0.5, epsilon = 1e-12);
        // joint impulse transfers half the applied impulse
        assert_abs_diff_eq!(sol.p_b[0], -0.5, epsilon = 1e-12);
    }
}
