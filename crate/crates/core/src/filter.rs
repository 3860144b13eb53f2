//! Contact-based Rao-Blackwellized particle filtering.
//!
//! Each particle carries a discrete contact state and a Gaussian belief
//! over the lifted continuous state `[q; v]`. A step samples the next
//! contact state per particle, advances the belief through the
//! contact-conditioned linear transition with a Kalman update, and
//! reweights by measurement likelihood. The constrained variant inserts
//! two projection stages: the pre-step belief is projected onto the
//! impulse constraints implied by the newly sampled contact state, and
//! the posterior onto the post-step velocity constraints.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constraints::{build_current, build_previous, impulse_expression};
use crate::contact::detect_contacts;
use crate::contact_state::{index_sets, sample_contact_state, ContactState};
use crate::dynamics::{assemble_lcp, World};
use crate::estimation::{
    kalman_correct, kalman_predict, solve_constrained_qp, GaussianBelief, ProjectionStatus,
};
use crate::mathutil::gaussian_logpdf;
use crate::transition::derive_transition;
use crate::{Error, Result};

/// Ridge added to the covariance before inversion for the QP metric.
const PRIOR_RIDGE: f64 = 1e-9;

/// Filter flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// Contact-conditioned Kalman updates only.
    Unconstrained,
    /// Adds the two QP projection stages per step.
    Constrained,
}

/// Metric of the projection QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMatrix {
    /// Euclidean projection, `W = I`.
    Identity,
    /// Mahalanobis projection, `W = (P + ridge I)^-1`.
    PriorInverse,
}

/// Likelihood the weight update evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightModel {
    /// Marginal likelihood of `z` under the predicted belief.
    PredictiveLikelihood,
    /// Residual likelihood at the (constrained) posterior.
    PosteriorResidual,
}

/// Ensemble-level filter parameters.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Process noise over the lifted state (2 n_f x 2 n_f).
    pub q_process: DMatrix<f64>,
    /// Measurement noise over the observed poses (n_q x n_q).
    pub r_meas: DMatrix<f64>,
    /// Resampling fires when ESS drops below this fraction of N.
    pub resample_threshold: f64,
    pub mode: FilterMode,
    pub w_choice: WeightingMatrix,
    pub weight_model: WeightModel,
    pub seed: u64,
}

impl FilterConfig {
    pub fn new(
        n_particles: usize,
        q_process: DMatrix<f64>,
        r_meas: DMatrix<f64>,
        seed: u64,
    ) -> Self {
        FilterConfig {
            n_particles,
            q_process,
            r_meas,
            resample_threshold: 0.5,
            mode: FilterMode::Unconstrained,
            w_choice: WeightingMatrix::PriorInverse,
            weight_model: WeightModel::PredictiveLikelihood,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be at least 1".into()));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::Config(
                "resample_threshold must lie in (0, 1]".into(),
            ));
        }
        if self.q_process.nrows() != self.q_process.ncols()
            || self.r_meas.nrows() != self.r_meas.ncols()
        {
            return Err(Error::Config("noise matrices must be square".into()));
        }
        Ok(())
    }
}

/// Per-particle numerical flags for the step just taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParticleFlags {
    /// A projection stage had an infeasible constraint set.
    pub qp_infeasible: bool,
    /// The transition's coupling matrix needed regularization.
    pub k_regularized: bool,
}

/// One hypothesis: a contact state with its conditional Gaussian.
#[derive(Debug, Clone)]
pub struct Particle {
    pub contact_state: ContactState,
    pub belief: GaussianBelief,
    pub weight: f64,
    pub flags: ParticleFlags,
}

/// Observed poses of the free bodies at one step.
#[derive(Debug, Clone)]
pub struct Measurement {
    /// Index of the step the measurement belongs to.
    pub t: usize,
    /// Stacked `(x, y, theta)` per free body, in matrix order.
    pub z: DVector<f64>,
}

/// Ensemble-level outcome of one filter step.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub ess: f64,
    pub resampled: bool,
    /// All likelihoods underflowed; weights were reset to uniform.
    pub weight_underflow: bool,
    pub qp_infeasible_count: usize,
    pub regularized_count: usize,
}

/// Uniform-weight ensemble sharing one initial belief, no contacts.
pub fn init_particles(n: usize, belief: &GaussianBelief) -> Vec<Particle> {
    (0..n)
        .map(|_| Particle {
            contact_state: ContactState::empty(),
            belief: belief.clone(),
            weight: 1.0 / n as f64,
            flags: ParticleFlags::default(),
        })
        .collect()
}

/// Measurement matrix selecting the pose block of the lifted state.
pub fn measurement_matrix(n_obs: usize, dim: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n_obs, dim);
    h.view_mut((0, 0), (n_obs, n_obs))
        .copy_from(&DMatrix::identity(n_obs, n_obs));
    h
}

/// RNG stream for particle `i` at step `t` (bit 0 set).
fn particle_rng(master: u64, step: usize, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((step as u64) << 24) | ((i as u64) << 1) | 1);
    rng
}

/// RNG stream for the resampling draw at step `t` (bit 0 clear).
fn resample_rng(master: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((step as u64) << 24);
    rng
}

/// RNG stream reserved for measurement-noise generation.
pub fn noise_rng(master: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(u64::MAX);
    rng
}

fn qp_metric(belief: &GaussianBelief, choice: WeightingMatrix) -> DMatrix<f64> {
    let n = belief.dim();
    match choice {
        WeightingMatrix::Identity => DMatrix::identity(n, n),
        WeightingMatrix::PriorInverse => {
            let ridged = &belief.cov + DMatrix::identity(n, n) * PRIOR_RIDGE;
            match ridged.cholesky() {
                Some(ch) => ch.inverse(),
                None => DMatrix::identity(n, n),
            }
        }
    }
}

/// Advances one particle; returns it with the step's log-likelihood.
fn advance_particle(
    particle: &Particle,
    world: &World,
    forces: &[Vector3<f64>],
    z: &DVector<f64>,
    cfg: &FilterConfig,
    constrained: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Particle, f64)> {
    let dim = particle.belief.dim();
    let nf = dim / 2;
    let n_obs = z.len();

    // pose a private copy of the scene at the particle's mean
    let mut scene = world.clone();
    let q = particle.belief.mean.rows(0, nf).into_owned();
    let v = particle.belief.mean.rows(nf, nf).into_owned();
    scene.set_free_state(&q, &v)?;
    let candidates = detect_contacts(&scene.bodies, scene.margin);
    let sys = assemble_lcp(&scene.bodies, &candidates, forces, scene.gravity, scene.h)?;

    let c_next = sample_contact_state(
        &sys,
        &particle.belief.mean,
        &particle.belief.cov,
        &particle.contact_state,
        rng,
    );
    let idx = index_sets(&c_next);
    let trans = derive_transition(&sys, &idx)?;
    let mut flags = ParticleFlags {
        qp_infeasible: false,
        k_regularized: trans.regularized,
    };
    let expr = if constrained && sys.n_contacts() > 0 {
        Some(impulse_expression(&sys, &trans))
    } else {
        None
    };

    // the new contact state retroactively constrains the pre-step belief
    let prior = match &expr {
        Some(expr) => {
            let cs_prev = build_previous(&sys, &idx, expr);
            if cs_prev.is_trivial() {
                particle.belief.clone()
            } else {
                let w = qp_metric(&particle.belief, cfg.w_choice);
                let proj = solve_constrained_qp(&particle.belief, &cs_prev, &w);
                flags.qp_infeasible |= proj.status != ProjectionStatus::Projected;
                proj.belief
            }
        }
        None => particle.belief.clone(),
    };
    let predicted = kalman_predict(&prior, &trans, &cfg.q_process);
    let h_z = measurement_matrix(n_obs, dim);
    let predictive_ll = {
        let s = &h_z * &predicted.cov * h_z.transpose() + &cfg.r_meas;
        gaussian_logpdf(&(z - &h_z * &predicted.mean), &s)
    };
    let posterior = kalman_correct(&predicted, z, &h_z, &cfg.r_meas)?;

    let belief = match &expr {
        Some(expr) => {
            let cs_cur = build_current(&sys, &idx, expr, &prior.mean);
            if cs_cur.is_trivial() {
                posterior
            } else {
                let w = qp_metric(&posterior, cfg.w_choice);
                let proj = solve_constrained_qp(&posterior, &cs_cur, &w);
                flags.qp_infeasible |= proj.status != ProjectionStatus::Projected;
                proj.belief
            }
        }
        None => posterior,
    };

    let loglike = match cfg.weight_model {
        WeightModel::PredictiveLikelihood => predictive_ll,
        WeightModel::PosteriorResidual => {
            let s = &h_z * &belief.cov * h_z.transpose() + &cfg.r_meas;
            gaussian_logpdf(&(z - &h_z * &belief.mean), &s)
        }
    }
    .unwrap_or(f64::NEG_INFINITY);

    Ok((
        Particle {
            contact_state: c_next,
            belief,
            weight: particle.weight,
            flags,
        },
        loglike,
    ))
}

fn filter_step(
    particles: &[Particle],
    world: &World,
    forces: &[Vector3<f64>],
    z: &Measurement,
    cfg: &FilterConfig,
    constrained: bool,
) -> Result<(Vec<Particle>, StepDiagnostics)> {
    cfg.validate()?;
    if particles.is_empty() {
        return Err(Error::Config("empty particle ensemble".into()));
    }
    let n = particles.len();
    let step = z.t;

    let advanced: Result<Vec<(Particle, f64)>> = particles
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = particle_rng(cfg.seed, step, i);
            advance_particle(p, world, forces, &z.z, cfg, constrained, &mut rng).map_err(|e| {
                Error::ParticleFailure {
                    step,
                    particle: i,
                    source: Box::new(e),
                }
            })
        })
        .collect();
    let advanced = advanced?;

    let mut diag = StepDiagnostics::default();
    let logw: Vec<f64> = advanced
        .iter()
        .map(|(p, ll)| p.weight.max(f64::MIN_POSITIVE).ln() + ll)
        .collect();
    let mut out: Vec<Particle> = advanced.into_iter().map(|(p, _)| p).collect();

    let peak = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak.is_finite() {
        let scaled: Vec<f64> = logw.iter().map(|l| (l - peak).exp()).collect();
        let total: f64 = scaled.iter().sum();
        for (p, s) in out.iter_mut().zip(&scaled) {
            p.weight = s / total;
        }
    } else {
        diag.weight_underflow = true;
        for p in out.iter_mut() {
            p.weight = 1.0 / n as f64;
        }
    }

    diag.ess = 1.0 / out.iter().map(|p| p.weight * p.weight).sum::<f64>();
    diag.qp_infeasible_count = out.iter().filter(|p| p.flags.qp_infeasible).count();
    diag.regularized_count = out.iter().filter(|p| p.flags.k_regularized).count();

    if diag.ess < cfg.resample_threshold * n as f64 {
        let mut rng = resample_rng(cfg.seed, step);
        out = systematic_resample(&out, &mut rng);
        diag.resampled = true;
    }
    Ok((out, diag))
}

/// One step of the contact-based RBPF.
///
/// `world` must hold the scripted bodies at their step-`t` poses; the free
/// bodies' stored state is ignored (each particle poses its own copy).
/// `forces` align with `world.bodies`.
pub fn rbpf_step(
    particles: &[Particle],
    world: &World,
    forces: &[Vector3<f64>],
    z: &Measurement,
    cfg: &FilterConfig,
) -> Result<(Vec<Particle>, StepDiagnostics)> {
    filter_step(particles, world, forces, z, cfg, false)
}

/// One step of the constrained contact-based RBPF.
pub fn crbpf_step(
    particles: &[Particle],
    world: &World,
    forces: &[Vector3<f64>],
    z: &Measurement,
    cfg: &FilterConfig,
) -> Result<(Vec<Particle>, StepDiagnostics)> {
    filter_step(particles, world, forces, z, cfg, true)
}

/// Systematic resampling; weights reset to `1/N`.
fn systematic_resample<R: Rng>(particles: &[Particle], rng: &mut R) -> Vec<Particle> {
    let n = particles.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    for k in 0..n {
        let target = u0 + k as f64 / n as f64;
        while i + 1 < n && cumulative + particles[i].weight < target {
            cumulative += particles[i].weight;
            i += 1;
        }
        let mut p = particles[i].clone();
        p.weight = 1.0 / n as f64;
        out.push(p);
    }
    out
}

/// Weighted mixture mean and total covariance of the ensemble.
pub fn estimate(particles: &[Particle]) -> (DVector<f64>, DMatrix<f64>) {
    assert!(!particles.is_empty(), "empty particle ensemble");
    let dim = particles[0].belief.dim();
    let mut mean = DVector::zeros(dim);
    for p in particles {
        mean += &p.belief.mean * p.weight;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for p in particles {
        let d = &p.belief.mean - &mean;
        cov += (&p.belief.cov + &d * d.transpose()) * p.weight;
    }
    (mean, cov)
}

/// Weighted uncertainty of the ensemble along a unit direction:
/// `sigma_d = sum_i w_i d^T P_i d`.
pub fn direction_uncertainty(particles: &[Particle], d: &DVector<f64>) -> f64 {
    particles
        .iter()
        .map(|p| p.weight * d.dot(&(&p.belief.cov * d)))
        .sum::<f64>()
        .max(0.0)
}
