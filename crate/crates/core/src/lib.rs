//! Planar multi-body state estimation with contact-aware particle filters.
//!
//! The crate has three layers:
//!
//! 1. **Dynamics** ([`geometry`], [`body`], [`contact`], [`dynamics`], [`lcp`]):
//!    convex-polygon rigid bodies in the plane, vertex/edge contact detection,
//!    and a velocity-based time stepper whose core is a mixed linear
//!    complementarity problem solved by Lemke pivoting (with a projected
//!    Gauss-Seidel fallback).
//! 2. **Estimation** ([`contact_state`], [`transition`], [`constraints`],
//!    [`estimation`]): a sampled discrete contact state selects index sets
//!    that turn the complementarity conditions into linear equalities and
//!    inequalities. Those give a contact-conditioned linear transition model
//!    for Kalman filtering, plus constraint sets that a quadratic-programming
//!    projection enforces on the Gaussian belief.
//! 3. **Filtering and benchmarking** ([`filter`], [`scenario`], [`harness`],
//!    [`report`]): Rao-Blackwellized particle filters (with and without
//!    constraint projection), benchmark scenarios, metrics, and CSV/JSON/SVG
//!    output.

pub mod body;
pub mod constraints;
pub mod contact;
pub mod contact_state;
pub mod dynamics;
pub mod estimation;
pub mod filter;
pub mod geometry;
pub mod harness;
pub mod lcp;
pub mod mathutil;
pub mod report;
pub mod scenario;
pub mod transition;

pub use body::{BodyId, RigidBody2D};
pub use contact::{detect_contacts, ContactCandidate, FeatureId};
pub use contact_state::{index_sets, ContactLabel, ContactState, IndexSets};
pub use dynamics::{LcpSystem, World};
pub use estimation::GaussianBelief;
pub use filter::{FilterConfig, FilterMode, Measurement, Particle};
pub use lcp::{LcpSolution, SolveStatus};
pub use scenario::Scenario;

use thiserror::Error;

/// Errors surfaced by the dynamics and estimation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("polygon is not strictly convex and counter-clockwise")]
    InvalidPolygon,
    #[error("non-static body must have positive mass and inertia")]
    InvalidMassProperties,
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("contact references unknown body id {0}")]
    UnknownBody(u32),
    #[error("LCP solve failed at step {step}: {status:?}")]
    SolverFailure { step: usize, status: lcp::SolveStatus },
    #[error("particle {particle} failed at step {step}: {source}")]
    ParticleFailure {
        step: usize,
        particle: usize,
        source: Box<Error>,
    },
    #[error("measurement noise covariance is not positive definite")]
    BadMeasurementNoise,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
