//! Shared oracles for the integration suite.
//!
//! Everything here re-derives results from first principles rather than
//! calling back into the solver paths under test: the complementarity
//! problem is rebuilt from the raw Jacobians and solved by exhaustive
//! support enumeration, and the projection QP is solved by enumerating
//! active sets and checking the KKT conditions directly.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use contact_rbpf::body::RigidBody2D;
use contact_rbpf::constraints::ConstraintSet;
use contact_rbpf::contact::detect_contacts;
use contact_rbpf::dynamics::{assemble_lcp, LcpSystem};
use contact_rbpf::geometry::ConvexPolygon;
use contact_rbpf::lcp::LcpSolution;

/// A contact LCP in standard form `w = N z + r` over `z = [p_n; p_f; sigma]`,
/// assembled independently of the production solver.
pub struct StandardLcp {
    pub n: DMatrix<f64>,
    pub r: DVector<f64>,
    /// Inverse mass matrix, kept to reconstruct velocities from impulses.
    pub w_inv: DMatrix<f64>,
    /// Velocity the free bodies would reach without contact impulses.
    pub v_free: DVector<f64>,
}

/// Rebuilds the standard form from the raw system matrices.
pub fn standard_form(sys: &LcpSystem) -> StandardLcp {
    let c = sys.n_contacts();
    let w_inv = sys.m.clone().try_inverse().expect("mass matrix invertible");
    let v_free = &sys.v_t + &w_inv * &sys.p_app;
    let gn = &sys.g_n;
    let gf = &sys.g_f;

    let mut n = DMatrix::zeros(4 * c, 4 * c);
    n.view_mut((0, 0), (c, c)).copy_from(&(gn.transpose() * &w_inv * gn));
    n.view_mut((0, c), (c, 2 * c)).copy_from(&(gn.transpose() * &w_inv * gf));
    n.view_mut((c, 0), (2 * c, c)).copy_from(&(gf.transpose() * &w_inv * gn));
    n.view_mut((c, c), (2 * c, 2 * c)).copy_from(&(gf.transpose() * &w_inv * gf));
    n.view_mut((c, 3 * c), (2 * c, c)).copy_from(&sys.e);
    n.view_mut((3 * c, 0), (c, c)).copy_from(&sys.u);
    n.view_mut((3 * c, c), (c, 2 * c)).copy_from(&(-sys.e.transpose()));

    let mut r = DVector::zeros(4 * c);
    r.rows_mut(0, c).copy_from(&(gn.transpose() * &v_free + &sys.b_n));
    r.rows_mut(c, 2 * c).copy_from(&(gf.transpose() * &v_free + &sys.b_f));

    StandardLcp { n, r, w_inv, v_free }
}

impl StandardLcp {
    /// Post-step velocity implied by an impulse vector `z`.
    pub fn velocity(&self, sys: &LcpSystem, z: &DVector<f64>) -> DVector<f64> {
        let c = sys.n_contacts();
        let p_n = z.rows(0, c);
        let p_f = z.rows(c, 2 * c);
        &self.v_free + &self.w_inv * (&sys.g_n * p_n + &sys.g_f * p_f)
    }

    /// Worst complementarity product `max_i |z_i w_i|` together with the
    /// worst nonnegativity violations of `z` and `w = N z + r`.
    pub fn residuals(&self, z: &DVector<f64>) -> (f64, f64, f64) {
        let w = &self.n * z + &self.r;
        let comp = z
            .iter()
            .zip(w.iter())
            .map(|(zi, wi)| (zi * wi).abs())
            .fold(0.0_f64, f64::max);
        let z_neg = (-z.min()).max(0.0);
        let w_neg = (-w.min()).max(0.0);
        (comp, z_neg, w_neg)
    }
}

/// The solver's impulse/slack variables stacked in standard-form order.
pub fn stacked_z(sol: &LcpSolution) -> DVector<f64> {
    let c = sol.p_n.len();
    let mut z = DVector::zeros(4 * c);
    z.rows_mut(0, c).copy_from(&sol.p_n);
    z.rows_mut(c, 2 * c).copy_from(&sol.p_f);
    z.rows_mut(3 * c, c).copy_from(&sol.sigma);
    z
}

/// Every solution of `w = N z + r, z >= 0, w >= 0, z^T w = 0` found by
/// enumerating all `2^dim` support sets and solving the corresponding
/// square subsystem. Exact up to `tol` in the sign and product checks.
pub fn enumerate_solutions(n: &DMatrix<f64>, r: &DVector<f64>, tol: f64) -> Vec<DVector<f64>> {
    let m = r.len();
    assert!(m <= 16, "support enumeration limited to 16 rows, got {m}");
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        let z = if support.is_empty() {
            DVector::zeros(m)
        } else {
            let k = support.len();
            let a = DMatrix::from_fn(k, k, |i, j| n[(support[i], support[j])]);
            let b = DVector::from_fn(k, |i, _| -r[support[i]]);
            let Some(zs) = a.lu().solve(&b) else { continue };
            let mut z = DVector::zeros(m);
            for (i, &s) in support.iter().enumerate() {
                z[s] = zs[i];
            }
            z
        };
        if z.min() < -tol {
            continue;
        }
        let w = n * &z + r;
        if w.min() < -tol {
            continue;
        }
        let comp = z
            .iter()
            .zip(w.iter())
            .map(|(zi, wi)| (zi * wi).abs())
            .fold(0.0_f64, f64::max);
        if comp <= tol {
            out.push(z);
        }
    }
    out
}

/// Lifted state `[q_t; v_t]` of a system.
pub fn lifted_state(sys: &LcpSystem) -> DVector<f64> {
    let nf = sys.n_free_dofs();
    let mut x = DVector::zeros(2 * nf);
    x.rows_mut(0, nf).copy_from(&sys.q_t);
    x.rows_mut(nf, nf).copy_from(&sys.v_t);
    x
}

/// Lifted post-step state `[q_t + h v_next; v_next]`.
pub fn lifted_next(sys: &LcpSystem, v_next: &DVector<f64>) -> DVector<f64> {
    let nf = sys.n_free_dofs();
    let mut x = DVector::zeros(2 * nf);
    x.rows_mut(0, nf).copy_from(&(&sys.q_t + v_next * sys.h));
    x.rows_mut(nf, nf).copy_from(v_next);
    x
}

/// Candidate-activation margin used by the random worlds. Deliberately
/// tighter than the production default so vertex counts stay predictable.
pub const ORACLE_MARGIN: f64 = 0.05;

/// A randomized one-free-body scene guaranteed to expose one or two
/// contact candidates, with randomized inertia, velocity, load, friction,
/// gravity, and (sometimes) a scripted conveyor motion under the contact.
///
/// Variants: a flat box on the floor (two same-normal contacts), a tilted
/// box or a point-down triangle (one contact), and a triangle wedged into
/// a floor/wall corner (two contacts with distinct normals).
pub fn random_contact_system(rng: &mut ChaCha8Rng) -> LcpSystem {
    loop {
        let mu = rng.random_range(0.05..0.9);
        let gravity = match rng.random_range(0..3u8) {
            0 => Vector2::zeros(),
            1 => Vector2::new(0.0, -9.81),
            _ => Vector2::new(0.0, -3.0),
        };
        let mut floor = RigidBody2D::new_static(
            0,
            Vector3::new(0.0, -0.5, 0.0),
            ConvexPolygon::centered_box(12.0, 1.0),
            mu,
        );
        if rng.random_bool(0.3) {
            // conveyor: scripted surface motion exercises the bias terms
            floor.velocity = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.1..0.1),
                0.0,
            );
        }

        let gap = rng.random_range(-0.002..0.02);
        let mass = rng.random_range(0.3..3.0);
        let x0 = rng.random_range(-0.3..0.3);
        let mut bodies = vec![floor];
        match rng.random_range(0..4u8) {
            0 => {
                // flat box: both bottom vertices are candidates
                let w = rng.random_range(0.4..1.2);
                let h = rng.random_range(0.4..1.2);
                let shape = ConvexPolygon::centered_box(w, h);
                let inertia = shape.inertia(mass);
                bodies.push(
                    RigidBody2D::new_dynamic(
                        1,
                        mass,
                        inertia,
                        Vector3::new(x0, h / 2.0 + gap, rng.random_range(-0.01..0.01)),
                        shape,
                        mu,
                    )
                    .unwrap(),
                );
            }
            1 => {
                // tilted box: one corner reaches down
                let w = rng.random_range(0.6..1.2);
                let h = rng.random_range(0.6..1.2);
                let theta: f64 =
                    rng.random_range(0.2..0.4) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let shape = ConvexPolygon::centered_box(w, h);
                let inertia = shape.inertia(mass);
                // lowest support point of the rotated box
                let drop = (w / 2.0) * theta.abs().sin() + (h / 2.0) * theta.cos();
                bodies.push(
                    RigidBody2D::new_dynamic(
                        1,
                        mass,
                        inertia,
                        Vector3::new(x0, drop + gap, theta),
                        shape,
                        mu,
                    )
                    .unwrap(),
                );
            }
            2 => {
                // point-down triangle
                let s = rng.random_range(0.5..1.0);
                let shape = ConvexPolygon::new(vec![
                    Vector2::new(0.0, -2.0 * s / 3.0),
                    Vector2::new(s / 2.0, s / 3.0),
                    Vector2::new(-s / 2.0, s / 3.0),
                ])
                .unwrap();
                let inertia = shape.inertia(mass);
                bodies.push(
                    RigidBody2D::new_dynamic(
                        1,
                        mass,
                        inertia,
                        Vector3::new(x0, 2.0 * s / 3.0 + gap, rng.random_range(-0.05..0.05)),
                        shape,
                        mu,
                    )
                    .unwrap(),
                );
            }
            _ => {
                // triangle wedged into a floor/wall corner: two contacts
                // with orthogonal normals
                let s = rng.random_range(0.5..1.0);
                let wall_gap = rng.random_range(-0.001..0.02);
                let shape = ConvexPolygon::new(vec![
                    Vector2::new(0.0, -2.0 * s / 3.0),
                    Vector2::new(s / 2.0, s / 3.0),
                    Vector2::new(-s / 2.0, s / 3.0),
                ])
                .unwrap();
                let inertia = shape.inertia(mass);
                bodies.push(
                    RigidBody2D::new_dynamic(
                        1,
                        mass,
                        inertia,
                        Vector3::new(0.0, 2.0 * s / 3.0 + gap, 0.0),
                        shape,
                        mu,
                    )
                    .unwrap(),
                );
                bodies.push(RigidBody2D::new_static(
                    2,
                    Vector3::new(s / 2.0 + wall_gap + 0.5, 0.5, 0.0),
                    ConvexPolygon::centered_box(1.0, 4.0),
                    mu,
                ));
            }
        }

        let free = bodies.iter_mut().find(|b| !b.is_static).unwrap();
        free.velocity = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..2.0),
        );

        let forces: Vec<Vector3<f64>> = bodies
            .iter()
            .map(|b| {
                if b.is_static {
                    Vector3::zeros()
                } else {
                    Vector3::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-1.0..1.0),
                    )
                }
            })
            .collect();

        let candidates = detect_contacts(&bodies, ORACLE_MARGIN);
        if candidates.is_empty() || candidates.len() > 2 {
            continue;
        }
        return assemble_lcp(&bodies, &candidates, &forces, gravity, 0.01).unwrap();
    }
}

/// Random symmetric positive-definite matrix with a modest condition number.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(0.5..1.5)
        } else if i > j {
            rng.random_range(-0.5..0.5)
        } else {
            0.0
        }
    });
    &l * l.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Solves `min (x - x0)^T W (x - x0)` over the rows of `cs` by enumerating
/// every subset of inequality rows as active, solving the KKT system, and
/// keeping KKT-consistent candidates. Returns `None` when no subset gives
/// a feasible stationary point (an infeasible or degenerate instance).
pub fn qp_brute_force(
    x0: &DVector<f64>,
    w: &DMatrix<f64>,
    cs: &ConstraintSet,
    tol: f64,
) -> Option<DVector<f64>> {
    let dim = x0.len();
    let me = cs.a_eq.nrows();
    let mi = cs.a_ineq.nrows();
    assert!(mi <= 16);
    let mut best: Option<(f64, DVector<f64>)> = None;

    for mask in 0u32..(1u32 << mi) {
        let active: Vec<usize> = (0..mi).filter(|&i| mask >> i & 1 == 1).collect();
        let ma = me + active.len();

        let mut a = DMatrix::zeros(ma, dim);
        let mut b = DVector::zeros(ma);
        a.view_mut((0, 0), (me, dim)).copy_from(&cs.a_eq);
        b.rows_mut(0, me).copy_from(&cs.b_eq);
        for (k, &i) in active.iter().enumerate() {
            a.row_mut(me + k).copy_from(&cs.a_ineq.row(i));
            b[me + k] = cs.b_ineq[i];
        }

        // stationarity W x + A^T lambda = W x0 alongside A x = b
        let mut kkt = DMatrix::zeros(dim + ma, dim + ma);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(w);
        kkt.view_mut((0, dim), (dim, ma)).copy_from(&a.transpose());
        kkt.view_mut((dim, 0), (ma, dim)).copy_from(&a);
        let mut rhs = DVector::zeros(dim + ma);
        rhs.rows_mut(0, dim).copy_from(&(w * x0));
        rhs.rows_mut(dim, ma).copy_from(&b);
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, dim).into_owned();
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }

        if me > 0 && (&cs.a_eq * &x - &cs.b_eq).amax() > tol {
            continue;
        }
        if mi > 0 && (&cs.a_ineq * &x - &cs.b_ineq).min() < -tol {
            continue;
        }
        // W(x - x0) = -A^T lambda, so mu = -lambda must be >= 0 on the
        // active inequality rows for a valid KKT point
        let lambda = sol.rows(dim, ma);
        if (0..active.len()).any(|k| lambda[me + k] > tol) {
            continue;
        }

        let diff = &x - x0;
        let obj = (diff.transpose() * w * &diff)[(0, 0)];
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}
