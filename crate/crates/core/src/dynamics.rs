//! World container, LCP assembly, and the time-stepping loop.
//!
//! Each step collects contact candidates, assembles the mixed LCP coupling
//! the Newton–Euler equations with contact complementarity, solves it, and
//! integrates poses with the post-step velocities (a velocity-based
//! time-stepping scheme: impulses, not forces, are the unknowns).

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::body::{BodyId, RigidBody2D};
use crate::contact::{detect_contacts, ContactCandidate};
use crate::geometry::cross2;
use crate::lcp::{self, LcpSolution, SolveStatus};
use crate::{Error, Result};

/// Default activation margin for contact candidates (m).
pub const DEFAULT_MARGIN: f64 = 0.1;

/// The mixed LCP of one time step.
///
/// All matrices are expressed over the free (non-static) degrees of
/// freedom only; static bodies contribute no rows or columns.
#[derive(Debug, Clone)]
pub struct LcpSystem {
    /// Mass matrix, block-diagonal `diag(m, m, I)` per free body.
    pub m: DMatrix<f64>,
    /// Normal Jacobian (3 n_free x n_c).
    pub g_n: DMatrix<f64>,
    /// Friction Jacobian (3 n_free x 2 n_c); columns `2i` and `2i+1` are
    /// opposed tangent directions of contact `i`.
    pub g_f: DMatrix<f64>,
    /// Bilateral joint Jacobian (3 n_free x n_j); empty without joints.
    pub g_b: DMatrix<f64>,
    /// Selector (2 n_c x n_c): column of ones per contact.
    pub e: DMatrix<f64>,
    /// Diagonal friction-coefficient matrix (n_c x n_c).
    pub u: DMatrix<f64>,
    /// Signed gaps at the start of the step.
    pub gaps: DVector<f64>,
    /// Normal stabilization: `gap/h` plus scripted-surface gap rate.
    pub b_n: DVector<f64>,
    /// Friction constant terms: scripted-surface slip rates, per row.
    pub b_f: DVector<f64>,
    /// Applied impulse `(f_ext + gravity he m) * h`, stacked per free body.
    pub p_app: DVector<f64>,
    /// Free-body velocities at the start of the step.
    pub v_t: DVector<f64>,
    /// Free-body poses at the start of the step (gap linearization point).
    pub q_t: DVector<f64>,
    /// Step length (s).
    pub h: f64,
    /// The candidates behind the Jacobian columns, in column order.
    pub candidates: Vec<ContactCandidate>,
    /// Free body ids, one per 3-DOF block, in matrix order.
    pub free_bodies: Vec<BodyId>,
}

impl LcpSystem {
    pub fn n_contacts(&self) -> usize {
        self.g_n.ncols()
    }

    pub fn n_free_dofs(&self) -> usize {
        self.m.nrows()
    }
}

/// A closed planar world advanced by LCP time stepping.
#[derive(Debug, Clone)]
pub struct World {
    pub bodies: Vec<RigidBody2D>,
    /// Uniform gravity acceleration applied to free bodies.
    pub gravity: Vector2<f64>,
    /// Step length (s).
    pub h: f64,
    /// Contact activation margin (m).
    pub margin: f64,
}

/// Everything produced by one step, kept for logging and estimation.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub system: LcpSystem,
    pub solution: LcpSolution,
}

impl World {
    pub fn new(bodies: Vec<RigidBody2D>, gravity: Vector2<f64>, h: f64) -> Result<Self> {
        if h <= 0.0 {
            return Err(Error::NonPositiveStep(h));
        }
        Ok(World {
            bodies,
            gravity,
            h,
            margin: DEFAULT_MARGIN,
        })
    }

    pub fn body(&self, id: BodyId) -> Result<&RigidBody2D> {
        self.bodies
            .iter()
            .find(|b| b.id == id)
            .ok_or(Error::UnknownBody(id))
    }

    pub fn body_mut(&mut self, id: BodyId) -> Result<&mut RigidBody2D> {
        self.bodies
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or(Error::UnknownBody(id))
    }

    /// Stacked `[q; v]` of the free bodies, in matrix order.
    pub fn free_state(&self) -> (DVector<f64>, DVector<f64>) {
        let free: Vec<&RigidBody2D> = self.bodies.iter().filter(|b| !b.is_static).collect();
        let q = DVector::from_iterator(3 * free.len(), free.iter().flat_map(|b| b.pose.iter().copied()));
        let v = DVector::from_iterator(
            3 * free.len(),
            free.iter().flat_map(|b| b.velocity.iter().copied()),
        );
        (q, v)
    }

    /// Writes stacked `[q; v]` back into the free bodies, in matrix order.
    pub fn set_free_state(&mut self, q: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        let n = 3 * self.bodies.iter().filter(|b| !b.is_static).count();
        if q.len() != n || v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "state length {}/{} for {} free DOFs",
                q.len(),
                v.len(),
                n
            )));
        }
        let mut k = 0;
        for body in self.bodies.iter_mut().filter(|b| !b.is_static) {
            body.pose = Vector3::new(q[k], q[k + 1], q[k + 2]);
            body.velocity = Vector3::new(v[k], v[k + 1], v[k + 2]);
            k += 3;
        }
        Ok(())
    }

    /// Advances the world by one step under the given per-body wrenches
    /// (aligned with `self.bodies`; entries for static bodies are ignored).
    pub fn step(&mut self, external_forces: &[Vector3<f64>]) -> Result<StepOutcome> {
        if external_forces.len() != self.bodies.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} wrenches for {} bodies",
                external_forces.len(),
                self.bodies.len()
            )));
        }
        let candidates = detect_contacts(&self.bodies, self.margin);
        let system = assemble_lcp(&self.bodies, &candidates, external_forces, self.gravity, self.h)?;
        let solution = lcp::solve(&system, lcp::TOL_COMP, 500);
        if solution.status == SolveStatus::Infeasible {
            return Err(Error::SolverFailure {
                step: 0,
                status: solution.status,
            });
        }
        self.apply_step(&system, &solution);
        Ok(StepOutcome { system, solution })
    }

    /// Integrates only the scripted (static) bodies' poses, leaving the
    /// free bodies untouched. Used when an estimator tracks the free
    /// bodies itself but must keep the actuated geometry in sync.
    pub fn advance_scripted(&mut self) {
        for body in self.bodies.iter_mut().filter(|b| b.is_static) {
            body.pose += body.velocity * self.h;
        }
    }

    /// Writes post-step velocities back and integrates all poses
    /// (static bodies keep their scripted velocities).
    pub fn apply_step(&mut self, system: &LcpSystem, solution: &LcpSolution) {
        let mut k = 0;
        for body in self.bodies.iter_mut() {
            if !body.is_static {
                debug_assert_eq!(system.free_bodies[k / 3], body.id);
                body.velocity =
                    Vector3::new(solution.v_next[k], solution.v_next[k + 1], solution.v_next[k + 2]);
                k += 3;
            }
            body.pose += body.velocity * self.h;
        }
    }
}

/// Assembles the mixed LCP for the given candidates and applied wrenches.
pub fn assemble_lcp(
    bodies: &[RigidBody2D],
    candidates: &[ContactCandidate],
    external_forces: &[Vector3<f64>],
    gravity: Vector2<f64>,
    h: f64,
) -> Result<LcpSystem> {
    if h <= 0.0 {
        return Err(Error::NonPositiveStep(h));
    }
    if external_forces.len() != bodies.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} wrenches for {} bodies",
            external_forces.len(),
            bodies.len()
        )));
    }

    // free-body DOF layout
    let mut dof_of: Vec<Option<usize>> = Vec::with_capacity(bodies.len());
    let mut free_bodies = Vec::new();
    let mut nf = 0;
    for b in bodies {
        if b.is_static {
            dof_of.push(None);
        } else {
            dof_of.push(Some(nf));
            free_bodies.push(b.id);
            nf += 3;
        }
    }
    let lookup = |id: BodyId| -> Result<usize> {
        bodies
            .iter()
            .position(|b| b.id == id)
            .ok_or(Error::UnknownBody(id))
    };

    let mut m = DMatrix::zeros(nf, nf);
    let mut p_app = DVector::zeros(nf);
    let mut v_t = DVector::zeros(nf);
    let mut q_t = DVector::zeros(nf);
    for (bi, b) in bodies.iter().enumerate() {
        if let Some(k) = dof_of[bi] {
            m[(k, k)] = b.mass;
            m[(k + 1, k + 1)] = b.mass;
            m[(k + 2, k + 2)] = b.inertia;
            let f = external_forces[bi];
            p_app[k] = (f.x + gravity.x * b.mass) * h;
            p_app[k + 1] = (f.y + gravity.y * b.mass) * h;
            p_app[k + 2] = f.z * h;
            v_t[k] = b.velocity.x;
            v_t[k + 1] = b.velocity.y;
            v_t[k + 2] = b.velocity.z;
            q_t[k] = b.pose.x;
            q_t[k + 1] = b.pose.y;
            q_t[k + 2] = b.pose.z;
        }
    }

    let c = candidates.len();
    let mut g_n = DMatrix::zeros(nf, c);
    let mut g_f = DMatrix::zeros(nf, 2 * c);
    let mut e = DMatrix::zeros(2 * c, c);
    let mut u = DMatrix::zeros(c, c);
    let mut gaps = DVector::zeros(c);
    let mut b_n = DVector::zeros(c);
    let mut b_f = DVector::zeros(2 * c);

    for (i, cand) in candidates.iter().enumerate() {
        let ia = lookup(cand.body_a)?;
        let ib = lookup(cand.body_b)?;
        for (bi, sign) in [(ia, 1.0), (ib, -1.0)] {
            if let Some(k) = dof_of[bi] {
                let r = cand.point - bodies[bi].position();
                g_n[(k, i)] = sign * cand.normal.x;
                g_n[(k + 1, i)] = sign * cand.normal.y;
                g_n[(k + 2, i)] = sign * cross2(r, cand.normal);
                g_f[(k, 2 * i)] = sign * cand.tangent.x;
                g_f[(k + 1, 2 * i)] = sign * cand.tangent.y;
                g_f[(k + 2, 2 * i)] = sign * cross2(r, cand.tangent);
            }
        }
        for k in 0..nf {
            g_f[(k, 2 * i + 1)] = -g_f[(k, 2 * i)];
        }
        e[(2 * i, i)] = 1.0;
        e[(2 * i + 1, i)] = 1.0;
        u[(i, i)] = cand.mu;
        gaps[i] = cand.gap;
        b_n[i] = cand.gap / h + cand.normal_rate;
        b_f[2 * i] = cand.tangent_rate;
        b_f[2 * i + 1] = -cand.tangent_rate;
    }

    Ok(LcpSystem {
        m,
        g_n,
        g_f,
        g_b: DMatrix::zeros(nf, 0),
        e,
        u,
        gaps,
        b_n,
        b_f,
        p_app,
        v_t,
        q_t,
        h,
        candidates: candidates.to_vec(),
        free_bodies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use approx::assert_abs_diff_eq;

    fn floor() -> RigidBody2D {
        RigidBody2D::new_static(
            0,
            Vector3::new(0.0, -0.5, 0.0),
            ConvexPolygon::centered_box(10.0, 1.0),
            0.5,
        )
    }

    fn free_box(y: f64) -> RigidBody2D {
        RigidBody2D::new_dynamic(
            1,
            1.0,
            1.0 / 6.0,
            Vector3::new(0.0, y, 0.0),
            ConvexPolygon::centered_box(1.0, 1.0),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn contact_free_assembly_degenerates() {
        let bodies = vec![free_box(5.0)];
        let sys = assemble_lcp(
            &bodies,
            &[],
            &[Vector3::new(0.5, 0.0, 0.0)],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        assert_eq!(sys.n_contacts(), 0);
        assert_eq!(sys.g_n.shape(), (3, 0));
        assert_eq!(sys.g_f.shape(), (3, 0));
        assert_abs_diff_eq!(sys.p_app[0], 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.p_app[1], -0.0981, epsilon = 1e-15);
    }

    #[test]
    fn box_on_floor_dimensions() {
        let bodies = vec![floor(), free_box(0.5)];
        let cands = detect_contacts(&bodies, 0.01);
        let sys = assemble_lcp(
            &bodies,
            &cands,
            &[Vector3::zeros(), Vector3::zeros()],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        // static floor excluded from the DOF space
        assert_eq!(sys.n_free_dofs(), 3);
        assert_eq!(sys.g_n.shape(), (3, 2));
        assert_eq!(sys.g_f.shape(), (3, 4));
        assert_eq!(sys.e.shape(), (4, 2));
        assert_eq!(sys.u.shape(), (2, 2));
        assert_abs_diff_eq!(sys.u[(0, 0)], 0.5, epsilon = 1e-12);
        // normal rows: [0, 1, r x n] with r = (-+0.5, 0)
        assert_abs_diff_eq!(sys.g_n[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.g_n[(1, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.g_n[(2, 0)].abs(), 0.5, epsilon = 1e-12);
        // opposed tangent columns
        for k in 0..3 {
            assert_abs_diff_eq!(sys.g_f[(k, 0)], -sys.g_f[(k, 1)], epsilon = 1e-15);
        }
    }

    #[test]
    fn free_fall_step() {
        let mut world = World::new(
            vec![free_box(5.0)],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        let out = world.step(&[Vector3::zeros()]).unwrap();
        assert_eq!(out.solution.status, SolveStatus::Solved);
        let b = &world.bodies[0];
        assert_abs_diff_eq!(b.velocity.y, -0.0981, epsilon = 1e-12);
        assert_abs_diff_eq!(b.velocity.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.pose.y, 5.0 - 9.81e-4, epsilon = 1e-12);
    }

    #[test]
    fn resting_box_is_supported() {
        let mut world = World::new(
            vec![floor(), free_box(0.5)],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        let out = world.step(&[Vector3::zeros(), Vector3::zeros()]).unwrap();
        let b = world.body(1).unwrap();
        assert_abs_diff_eq!(b.velocity.norm(), 0.0, epsilon = 1e-9);
        let total_pn: f64 = out.solution.p_n.iter().sum();
        assert_abs_diff_eq!(total_pn, 1.0 * 9.81 * 0.01, epsilon = 1e-9);
    }

    #[test]
    fn subcritical_push_sticks() {
        // mu m g = 0.5 * 9.81 = 4.905 N; push with 2 N -> sticking
        let mut world = World::new(
            vec![floor(), free_box(0.5)],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        let out = world
            .step(&[Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)])
            .unwrap();
        let b = world.body(1).unwrap();
        assert_abs_diff_eq!(b.velocity.norm(), 0.0, epsilon = 1e-9);
        assert!(out.solution.sigma.iter().all(|&s| s.abs() <= 1e-9));
    }

    #[test]
    fn supercritical_push_slides() {
        let mut world = World::new(
            vec![floor(), free_box(0.5)],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        world
            .step(&[Vector3::zeros(), Vector3::new(8.0, 0.0, 0.0)])
            .unwrap();
        let b = world.body(1).unwrap();
        // (8 - 4.905) N over 0.01 s on 1 kg
        assert_abs_diff_eq!(b.velocity.x, (8.0 - 4.905) * 0.01, epsilon = 1e-9);
    }

    #[test]
    fn settling_energy_is_nonincreasing() {
        let mut world = World::new(
            vec![floor(), free_box(0.5)],
            Vector2::new(0.0, -9.81),
            0.01,
        )
        .unwrap();
        world.body_mut(1).unwrap().velocity = Vector3::new(0.0, -0.5, 0.0);
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            world.step(&[Vector3::zeros(), Vector3::zeros()]).unwrap();
            let b = world.body(1).unwrap();
            let ke = 0.5 * b.mass * (b.velocity.x * b.velocity.x + b.velocity.y * b.velocity.y)
                + 0.5 * b.inertia * b.velocity.z * b.velocity.z;
            assert!(ke <= prev + 1e-9, "kinetic energy grew: {prev} -> {ke}");
            prev = ke;
        }
        let b = world.body(1).unwrap();
        assert_abs_diff_eq!(b.velocity.norm(), 0.0, epsilon = 1e-6);
        assert!(b.pose.y >= 0.5 - 1e-6);
    }
}
