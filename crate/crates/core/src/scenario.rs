//! Benchmark scenario definitions and configuration loading.
//!
//! A scenario bundles the scene (bodies, scripted finger motions, applied
//! wrench schedules) with the run parameters (step length, horizon,
//! measurement noise, seed). Two built-in scenarios are provided; both are
//! also expressible as TOML files so they can be edited without
//! recompiling. Schedules are piecewise constant: each segment's value
//! applies from its step onward.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::Deserialize;

use crate::body::{BodyId, RigidBody2D};
use crate::dynamics::{World, DEFAULT_MARGIN};
use crate::estimation::GaussianBelief;
use crate::geometry::ConvexPolygon;
use crate::{Error, Result};

/// Piecewise-constant per-body schedule of 3-vectors (wrench or twist).
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub body: BodyId,
    /// `(from_step, value)` pairs, sorted by step.
    pub segments: Vec<(usize, Vector3<f64>)>,
}

impl Schedule {
    pub fn new(body: BodyId, mut segments: Vec<(usize, Vector3<f64>)>) -> Self {
        segments.sort_by_key(|(from, _)| *from);
        Schedule { body, segments }
    }

    /// Value in effect at `step` (zero before the first segment).
    pub fn at(&self, step: usize) -> Vector3<f64> {
        let mut value = Vector3::zeros();
        for (from, v) in &self.segments {
            if step >= *from {
                value = *v;
            } else {
                break;
            }
        }
        value
    }
}

/// Standard deviations of the additive pose measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_pos: f64,
    pub sigma_theta: f64,
}

/// Estimator defaults carried by the scenario (all config-overridable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDefaults {
    /// Particles per ensemble.
    pub n_particles: usize,
    /// Per-step process-noise variance on each velocity DOF.
    pub q_vel: f64,
    /// Initial belief variance on x and y.
    pub p0_pos: f64,
    /// Initial belief variance on the angle.
    pub p0_theta: f64,
    /// Initial belief variance on each velocity DOF.
    pub p0_vel: f64,
}

impl Default for FilterDefaults {
    fn default() -> Self {
        FilterDefaults {
            n_particles: 50,
            q_vel: 1e-4,
            p0_pos: 1e-4,
            p0_theta: 1e-4,
            p0_vel: 1e-4,
        }
    }
}

/// A complete benchmark setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub bodies: Vec<RigidBody2D>,
    /// Twist schedules for the kinematically scripted (static) bodies.
    pub scripted_motions: Vec<Schedule>,
    /// Wrench schedules for the free bodies.
    pub external_force_schedule: Vec<Schedule>,
    pub gravity: Vector2<f64>,
    pub h: f64,
    pub n_steps: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub margin: f64,
    pub filter: FilterDefaults,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if self.h <= 0.0 {
            return Err(Error::NonPositiveStep(self.h));
        }
        if self.bodies.is_empty() {
            return Err(Error::Config("scenario has no bodies".into()));
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if self.bodies[..i].iter().any(|o| o.id == b.id) {
                return Err(Error::Config(format!("duplicate body id {}", b.id)));
            }
        }
        if self.n_free() == 0 {
            return Err(Error::Config("scenario has no free bodies".into()));
        }
        if self.noise.sigma_pos < 0.0 || self.noise.sigma_theta < 0.0 {
            return Err(Error::Config("noise sigmas must be nonnegative".into()));
        }
        let find = |id: BodyId| self.bodies.iter().find(|b| b.id == id);
        for m in &self.scripted_motions {
            match find(m.body) {
                None => return Err(Error::UnknownBody(m.body)),
                Some(b) if !b.is_static => {
                    return Err(Error::Config(format!(
                        "motion schedule targets free body {}",
                        m.body
                    )))
                }
                _ => {}
            }
        }
        for f in &self.external_force_schedule {
            match find(f.body) {
                None => return Err(Error::UnknownBody(f.body)),
                Some(b) if b.is_static => {
                    return Err(Error::Config(format!(
                        "force schedule targets scripted body {}",
                        f.body
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// World posed at step 0 (scripted velocities not yet applied).
    pub fn world(&self) -> Result<World> {
        let mut w = World::new(self.bodies.clone(), self.gravity, self.h)?;
        w.margin = self.margin;
        Ok(w)
    }

    pub fn n_free(&self) -> usize {
        self.bodies.iter().filter(|b| !b.is_static).count()
    }

    /// Applied wrenches at `step`, aligned with the body list.
    pub fn forces_at(&self, step: usize) -> Vec<Vector3<f64>> {
        self.bodies
            .iter()
            .map(|b| {
                self.external_force_schedule
                    .iter()
                    .filter(|s| s.body == b.id)
                    .map(|s| s.at(step))
                    .sum()
            })
            .collect()
    }

    /// Writes the scripted velocities for `step` into the world.
    pub fn apply_scripted(&self, world: &mut World, step: usize) -> Result<()> {
        for m in &self.scripted_motions {
            world.body_mut(m.body)?.velocity = m.at(step);
        }
        Ok(())
    }

    /// Measurement noise covariance over the observed poses.
    pub fn r_meas(&self) -> DMatrix<f64> {
        let k = self.n_free();
        let mut d = DVector::zeros(3 * k);
        for i in 0..k {
            d[3 * i] = self.noise.sigma_pos.powi(2);
            d[3 * i + 1] = self.noise.sigma_pos.powi(2);
            d[3 * i + 2] = self.noise.sigma_theta.powi(2);
        }
        DMatrix::from_diagonal(&d)
    }

    /// Process noise over the lifted state (velocity block only).
    pub fn q_process(&self) -> DMatrix<f64> {
        let nf = 3 * self.n_free();
        let mut q = DMatrix::zeros(2 * nf, 2 * nf);
        q.view_mut((nf, nf), (nf, nf))
            .copy_from(&(DMatrix::identity(nf, nf) * self.filter.q_vel));
        q
    }

    /// Initial Gaussian belief centered on the true initial state.
    pub fn initial_belief(&self) -> Result<GaussianBelief> {
        let world = self.world()?;
        let (q, v) = world.free_state();
        let nf = q.len();
        let mut mean = DVector::zeros(2 * nf);
        mean.rows_mut(0, nf).copy_from(&q);
        mean.rows_mut(nf, nf).copy_from(&v);
        let mut d = DVector::zeros(2 * nf);
        for i in 0..nf / 3 {
            d[3 * i] = self.filter.p0_pos;
            d[3 * i + 1] = self.filter.p0_pos;
            d[3 * i + 2] = self.filter.p0_theta;
        }
        for i in nf..2 * nf {
            d[i] = self.filter.p0_vel;
        }
        Ok(GaussianBelief::new(mean, DMatrix::from_diagonal(&d)))
    }

    /// Looks up a built-in scenario by name.
    pub fn builtin(name: &str) -> Option<Scenario> {
        match name {
            "block_wall" => Some(block_wall()),
            "gripper_triangle" => Some(gripper_triangle()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        file.into_scenario()
    }

    pub fn from_toml(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// A block pushed against a fixed wall.
///
/// The 1 m x 1 m, 1 kg block starts at the origin and is pushed toward
/// the wall on its right; the push weakens after 2 s, at which point the
/// transverse force overcomes the friction cone and the block creeps
/// along the wall. The initial gap and push are sized so the first wall
/// impulse fires at step 80 of 300.
pub fn block_wall() -> Scenario {
    // travel to contact: h^2 (f/m) k(k+1)/2 = 0.324 m at k = 80
    let gap = 0.324;
    let wall = RigidBody2D::new_static(
        0,
        Vector3::new(0.5 + gap + 0.5, 0.0, 0.0),
        ConvexPolygon::centered_box(1.0, 4.0),
        0.5,
    );
    let block = RigidBody2D::new_dynamic(
        1,
        1.0,
        ConvexPolygon::centered_box(1.0, 1.0).inertia(1.0),
        Vector3::zeros(),
        ConvexPolygon::centered_box(1.0, 1.0),
        0.5,
    )
    .expect("valid block");
    Scenario {
        name: "block_wall".into(),
        bodies: vec![wall, block],
        scripted_motions: Vec::new(),
        external_force_schedule: vec![Schedule::new(
            1,
            vec![
                (0, Vector3::new(1.0, 0.2, 0.0)),
                (200, Vector3::new(0.3, 0.2, 0.0)),
            ],
        )],
        gravity: Vector2::zeros(),
        h: 0.01,
        n_steps: 300,
        noise: NoiseSpec {
            sigma_pos: 0.01,
            sigma_theta: 0.01,
        },
        seed: 42,
        margin: DEFAULT_MARGIN,
        filter: FilterDefaults::default(),
    }
}

/// A two-finger gripper closing on a tilted triangle.
///
/// The upper finger descends, taps the tilted apex (~step 200) and sets the
/// part drifting and righting; it stops at step 950 just before the lower
/// finger arrives. The rising lower finger catches the leading base vertex
/// (~step 950) and the impulse spins the part toward flush until the second
/// base vertex lands (~step 1230). A gentle hold-down force applied from
/// step 1240 settles the base flush on the lower finger, which stops at
/// step 1290; the part then rests in the grasp with both base contacts
/// loaded for the remainder of the run.
pub fn gripper_triangle() -> Scenario {
    let side = 0.6_f64;
    let apex = side / 3.0_f64.sqrt();
    let base = side / (2.0 * 3.0_f64.sqrt());
    let tilt = 0.2;
    let shape = ConvexPolygon::new(vec![
        Vector2::new(-side / 2.0, -base),
        Vector2::new(side / 2.0, -base),
        Vector2::new(0.0, apex),
    ])
    .expect("valid triangle");
    let triangle = RigidBody2D::new_dynamic(
        0,
        0.3,
        shape.inertia(0.3),
        Vector3::new(0.0, 0.0, tilt),
        shape,
        0.3,
    )
    .expect("valid part");
    // apex world height at the initial tilt + finger half-height + approach
    let apex_y = apex * tilt.cos();
    let upper = RigidBody2D::new_static(
        1,
        Vector3::new(0.0, apex_y + 0.1 + 0.1, 0.0),
        ConvexPolygon::centered_box(1.6, 0.2),
        0.3,
    );
    let lower = RigidBody2D::new_static(
        2,
        Vector3::new(0.0, -0.925, 0.0),
        ConvexPolygon::centered_box(1.6, 0.2),
        0.3,
    );
    Scenario {
        name: "gripper_triangle".into(),
        bodies: vec![triangle, upper, lower],
        scripted_motions: vec![
            Schedule::new(
                1,
                vec![
                    (0, Vector3::new(0.0, -0.05, 0.0)),
                    (950, Vector3::zeros()),
                ],
            ),
            Schedule::new(
                2,
                vec![(0, Vector3::new(0.0, 0.02, 0.0)), (1290, Vector3::zeros())],
            ),
        ],
        external_force_schedule: vec![Schedule::new(
            0,
            vec![(1240, Vector3::new(0.0, -0.02, 0.0))],
        )],
        gravity: Vector2::zeros(),
        h: 0.01,
        n_steps: 1400,
        noise: NoiseSpec {
            sigma_pos: 0.01,
            sigma_theta: 0.01,
        },
        seed: 42,
        margin: DEFAULT_MARGIN,
        filter: FilterDefaults::default(),
    }
}

// --- TOML schema ---

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    h: f64,
    n_steps: usize,
    seed: u64,
    #[serde(default)]
    gravity: [f64; 2],
    #[serde(default = "default_margin")]
    margin: f64,
    noise: NoiseFile,
    #[serde(default)]
    filter: FilterFile,
    #[serde(rename = "body")]
    bodies: Vec<BodyFile>,
    #[serde(rename = "motion", default)]
    motions: Vec<ScheduleFile>,
    #[serde(rename = "force", default)]
    forces: Vec<ScheduleFile>,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    sigma_pos: f64,
    sigma_theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FilterFile {
    n_particles: usize,
    q_vel: f64,
    p0_pos: f64,
    p0_theta: f64,
    p0_vel: f64,
}

impl Default for FilterFile {
    fn default() -> Self {
        let d = FilterDefaults::default();
        FilterFile {
            n_particles: d.n_particles,
            q_vel: d.q_vel,
            p0_pos: d.p0_pos,
            p0_theta: d.p0_theta,
            p0_vel: d.p0_vel,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyFile {
    id: u32,
    kind: BodyKind,
    shape: ShapeFile,
    pose: [f64; 3],
    #[serde(default)]
    velocity: [f64; 3],
    mass: Option<f64>,
    inertia: Option<f64>,
    friction: f64,
}

#[derive(Debug, Deserialize, PartialEq, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum BodyKind {
    Dynamic,
    Static,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeFile {
    /// `{ box = [width, height] }`
    Box([f64; 2]),
    /// `{ polygon = [[x, y], ...] }`, counter-clockwise
    Polygon(Vec<[f64; 2]>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    body: u32,
    segments: Vec<SegmentFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    from: usize,
    value: [f64; 3],
}

impl ScheduleFile {
    fn into_schedule(self) -> Schedule {
        Schedule::new(
            self.body,
            self.segments
                .into_iter()
                .map(|s| (s.from, Vector3::from(s.value)))
                .collect(),
        )
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let mut bodies = Vec::with_capacity(self.bodies.len());
        for b in self.bodies {
            let shape = match b.shape {
                ShapeFile::Box([w, h]) => ConvexPolygon::centered_box(w, h),
                ShapeFile::Polygon(points) => ConvexPolygon::new(
                    points.into_iter().map(|p| Vector2::new(p[0], p[1])).collect(),
                )?,
            };
            let pose = Vector3::from(b.pose);
            let velocity = Vector3::from(b.velocity);
            let body = match b.kind {
                BodyKind::Static => {
                    let mut body = RigidBody2D::new_static(b.id, pose, shape, b.friction);
                    body.velocity = velocity;
                    body
                }
                BodyKind::Dynamic => {
                    let mass = b.mass.ok_or_else(|| {
                        Error::Config(format!("dynamic body {} needs a mass", b.id))
                    })?;
                    let inertia = b.inertia.unwrap_or_else(|| shape.inertia(mass));
                    let mut body =
                        RigidBody2D::new_dynamic(b.id, mass, inertia, pose, shape, b.friction)?;
                    body.velocity = velocity;
                    body
                }
            };
            bodies.push(body);
        }
        let scenario = Scenario {
            name: self.name,
            bodies,
            scripted_motions: self.motions.into_iter().map(|m| m.into_schedule()).collect(),
            external_force_schedule: self.forces.into_iter().map(|f| f.into_schedule()).collect(),
            gravity: Vector2::from(self.gravity),
            h: self.h,
            n_steps: self.n_steps,
            noise: NoiseSpec {
                sigma_pos: self.noise.sigma_pos,
                sigma_theta: self.noise.sigma_theta,
            },
            seed: self.seed,
            margin: self.margin,
            filter: FilterDefaults {
                n_particles: self.filter.n_particles,
                q_vel: self.filter.q_vel,
                p0_pos: self.filter.p0_pos,
                p0_theta: self.filter.p0_theta,
                p0_vel: self.filter.p0_vel,
            },
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn builtins_validate() {
        for name in ["block_wall", "gripper_triangle"] {
            let s = Scenario::builtin(name).unwrap();
            s.validate().unwrap();
            assert_eq!(s.name, name);
            s.world().unwrap();
            s.initial_belief().unwrap();
        }
        assert!(Scenario::builtin("no_such").is_none());
    }

    #[test]
    fn schedule_is_piecewise_constant() {
        let s = Schedule::new(
            1,
            vec![
                (10, Vector3::new(1.0, 0.0, 0.0)),
                (20, Vector3::new(2.0, 0.0, 0.0)),
            ],
        );
        assert_eq!(s.at(0), Vector3::zeros());
        assert_eq!(s.at(10), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s.at(19), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s.at(500), Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn force_alignment_follows_body_order() {
        let s = block_wall();
        let f0 = s.forces_at(0);
        assert_eq!(f0.len(), 2);
        assert_eq!(f0[0], Vector3::zeros()); // the wall takes no wrench
        assert_eq!(f0[1], Vector3::new(1.0, 0.2, 0.0));
        assert_eq!(s.forces_at(250)[1], Vector3::new(0.3, 0.2, 0.0));
    }

    #[test]
    fn toml_round_trip_matches_builtin() {
        let text = r#"
            name = "block_wall"
            h = 0.01
            n_steps = 300
            seed = 42

            [noise]
            sigma_pos = 0.01
            sigma_theta = 0.01

            [[body]]
            id = 0
            kind = "static"
            shape = { box = [1.0, 4.0] }
            pose = [1.324, 0.0, 0.0]
            friction = 0.5

            [[body]]
            id = 1
            kind = "dynamic"
            shape = { box = [1.0, 1.0] }
            pose = [0.0, 0.0, 0.0]
            mass = 1.0
            friction = 0.5

            [[force]]
            body = 1
            segments = [
                { from = 0, value = [1.0, 0.2, 0.0] },
                { from = 200, value = [0.3, 0.2, 0.0] },
            ]
        "#;
        let parsed = Scenario::from_toml_str(text).unwrap();
        let builtin = block_wall();
        assert_eq!(parsed.bodies.len(), builtin.bodies.len());
        for (a, b) in parsed.bodies.iter().zip(&builtin.bodies) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.is_static, b.is_static);
            assert_abs_diff_eq!((a.pose - b.pose).norm(), 0.0, epsilon = 1e-12);
        }
        assert_eq!(
            parsed.external_force_schedule,
            builtin.external_force_schedule
        );
        assert_abs_diff_eq!(
            parsed.bodies[1].inertia,
            builtin.bodies[1].inertia,
            epsilon = 1e-12
        );
    }

    #[test]
    fn config_errors_are_reported() {
        assert!(Scenario::from_toml_str("not toml at all [").is_err());
        let missing_mass = r#"
            name = "x"
            h = 0.01
            n_steps = 10
            seed = 1
            [noise]
            sigma_pos = 0.01
            sigma_theta = 0.01
            [[body]]
            id = 0
            kind = "dynamic"
            shape = { box = [1.0, 1.0] }
            pose = [0.0, 0.0, 0.0]
            friction = 0.5
        "#;
        match Scenario::from_toml_str(missing_mass) {
            Err(Error::Config(msg)) => assert!(msg.contains("mass")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn motion_on_free_body_is_rejected() {
        let mut s = block_wall();
        s.scripted_motions = vec![Schedule::new(1, vec![(0, Vector3::zeros())])];
        assert!(s.validate().is_err());
    }
}
