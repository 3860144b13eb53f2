//! Discrete contact states and their index-set encoding.
//!
//! A contact state assigns each candidate one of four modes. The mode
//! selects which complementarity rows are *enforced* as equalities (the
//! `alpha` sets) and which have their impulse pinned to zero (the `beta`
//! sets); that split is what turns the LCP into the linear models used by
//! the estimation layer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::contact::FeatureId;
use crate::dynamics::LcpSystem;
use crate::lcp::{solve, LcpSolution, SolveStatus, TOL_COMP};
use crate::mathutil::normal_cdf;

/// Slip band below which a contact counts as sticking (m/s).
pub const V_STICK_BAND: f64 = 1e-3;
/// Hysteresis mixing weight toward staying active.
const HYSTERESIS: f64 = 0.2;

/// Mode of one contact.
///
/// `SlidingPos` means the body slips along `+tangent`, so the friction
/// impulse saturates on the `-tangent` direction; `SlidingNeg` is the
/// mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactLabel {
    Separated,
    Sticking,
    SlidingPos,
    SlidingNeg,
}

/// Modes for every candidate of one step, in candidate order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactState {
    pub labels: Vec<ContactLabel>,
    /// Feature identities, used to match contacts across steps.
    pub features: Vec<FeatureId>,
}

impl ContactState {
    pub fn empty() -> Self {
        ContactState {
            labels: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label of a feature if it was part of this state.
    pub fn label_of(&self, feature: &FeatureId) -> Option<ContactLabel> {
        self.features
            .iter()
            .position(|f| f == feature)
            .map(|i| self.labels[i])
    }

    /// True when the feature was active (non-separated) in this state.
    pub fn was_active(&self, feature: &FeatureId) -> bool {
        matches!(
            self.label_of(feature),
            Some(ContactLabel::Sticking | ContactLabel::SlidingPos | ContactLabel::SlidingNeg)
        )
    }

    /// Number of non-separated contacts.
    pub fn active_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| !matches!(l, ContactLabel::Separated))
            .count()
    }
}

/// Enforced (`alpha`) and impulse-free (`beta`) row subsets per family.
///
/// Normal and `sigma` rows are indexed per contact; friction rows use
/// `2i` for the `+tangent` direction and `2i+1` for `-tangent`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub alpha_n: Vec<usize>,
    pub beta_n: Vec<usize>,
    pub alpha_f: Vec<usize>,
    pub beta_f: Vec<usize>,
    pub alpha_s: Vec<usize>,
    pub beta_s: Vec<usize>,
}

impl IndexSets {
    /// Total number of enforced rows |alpha|.
    pub fn alpha_len(&self) -> usize {
        self.alpha_n.len() + self.alpha_f.len() + self.alpha_s.len()
    }
}

/// Maps a contact state to its index sets.
pub fn index_sets(state: &ContactState) -> IndexSets {
    let mut idx = IndexSets::default();
    for (i, label) in state.labels.iter().enumerate() {
        match label {
            ContactLabel::Separated => {
                idx.beta_n.push(i);
                idx.beta_f.push(2 * i);
                idx.beta_f.push(2 * i + 1);
                idx.beta_s.push(i);
            }
            ContactLabel::Sticking => {
                idx.alpha_n.push(i);
                idx.alpha_f.push(2 * i);
                idx.alpha_f.push(2 * i + 1);
                idx.beta_s.push(i);
            }
            ContactLabel::SlidingPos => {
                idx.alpha_n.push(i);
                idx.beta_f.push(2 * i);
                idx.alpha_f.push(2 * i + 1);
                idx.alpha_s.push(i);
            }
            ContactLabel::SlidingNeg => {
                idx.alpha_n.push(i);
                idx.alpha_f.push(2 * i);
                idx.beta_f.push(2 * i + 1);
                idx.alpha_s.push(i);
            }
        }
    }
    idx
}

/// Recovers the realized contact state from an LCP solution's
/// zero/positive pattern.
pub fn labels_from_solution(sys: &LcpSystem, sol: &LcpSolution) -> ContactState {
    const TOL: f64 = 1e-9;
    let c = sys.n_contacts();
    let mut labels = Vec::with_capacity(c);
    for i in 0..c {
        let label = if sol.p_n[i] <= TOL {
            ContactLabel::Separated
        } else {
            // slip speed along +tangent after the step
            let u = sys.g_f.column(2 * i).dot(&sol.v_next) + sys.b_f[2 * i];
            if u > TOL {
                ContactLabel::SlidingPos
            } else if u < -TOL {
                ContactLabel::SlidingNeg
            } else {
                ContactLabel::Sticking
            }
        };
        labels.push(label);
    }
    ContactState {
        labels,
        features: sys.candidates.iter().map(|c| c.feature).collect(),
    }
}

/// Samples a contact state for one particle.
///
/// The label describes the step about to be taken, so both draws are
/// centered on end-of-step predictions rather than instantaneous
/// quantities. Activation is Gaussian-gap based:
/// `p_active = Phi(-g_pred / sigma_g)` where `g_pred = g + h g_n^T v_free`
/// is the gap a contact-free step would reach from the mean and `sigma_g`
/// is its deviation propagated through the lifted gradient `[g_n; h g_n]`,
/// boosted toward persistence when the feature was active in `c_prev`.
/// A closing contact thus activates with near certainty even while the
/// instantaneous gap is still open. Active contacts then pick sticking
/// versus sliding from the post-step slip speed of the mean's own
/// one-step contact solve, which knows that an impact-scale normal
/// impulse lets friction arrest moderate tangential motion; the pre-step
/// slip is the fallback when that solve fails. Deterministic given the
/// rng state.
///
/// `mean` and `cov` are over the lifted state `[q; v]` of the free bodies;
/// candidates must have been detected at the mean pose.
pub fn sample_contact_state<R: Rng>(
    sys: &LcpSystem,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    c_prev: &ContactState,
    rng: &mut R,
) -> ContactState {
    let nf = sys.n_free_dofs();
    debug_assert_eq!(mean.len(), 2 * nf);
    let c = sys.n_contacts();
    let v_hat = mean.rows(nf, nf).into_owned();
    let cov_vv = cov.view((nf, nf), (nf, nf));
    let v_free = match sys.m.clone().cholesky() {
        Some(ch) => &v_hat + ch.solve(&sys.p_app),
        None => v_hat.clone(),
    };
    let v_resolved = if c > 0 {
        let sol = solve(sys, TOL_COMP, 500);
        (sol.status != SolveStatus::Infeasible).then(|| sol.v_next)
    } else {
        None
    };

    let mut labels = Vec::with_capacity(c);
    let mut lifted = DVector::zeros(2 * nf);
    for i in 0..c {
        let cand = &sys.candidates[i];
        let g_row = sys.g_n.column(i);
        let g_pred = cand.gap + sys.h * g_row.dot(&v_free);
        lifted.rows_mut(0, nf).copy_from(&g_row);
        lifted.rows_mut(nf, nf).copy_from(&(g_row * sys.h));
        let sigma_g = (cov * &lifted).dot(&lifted).max(0.0).sqrt();
        let mut p_active = if sigma_g > 1e-12 {
            normal_cdf(-g_pred / sigma_g)
        } else if g_pred <= 0.0 {
            1.0
        } else {
            0.0
        };
        if c_prev.was_active(&cand.feature) {
            p_active = HYSTERESIS + (1.0 - HYSTERESIS) * p_active;
        }
        let active = rng.random::<f64>() < p_active;
        if !active {
            labels.push(ContactLabel::Separated);
            continue;
        }

        let t_row = sys.g_f.column(2 * i);
        let v_t = match &v_resolved {
            Some(v_next) => t_row.dot(v_next) + sys.b_f[2 * i],
            None => t_row.dot(&v_hat) + sys.b_f[2 * i],
        };
        let sigma_v = (&cov_vv * t_row).dot(&t_row).max(0.0).sqrt();
        let p_stick = if sigma_v > 1e-12 {
            normal_cdf((V_STICK_BAND - v_t.abs()) / sigma_v)
        } else if v_t.abs() <= V_STICK_BAND {
            1.0
        } else {
            0.0
        };
        let label = if rng.random::<f64>() < p_stick {
            ContactLabel::Sticking
        } else if v_t >= 0.0 {
            ContactLabel::SlidingPos
        } else {
            ContactLabel::SlidingNeg
        };
        labels.push(label);
    }
    ContactState {
        labels,
        features: sys.candidates.iter().map(|c| c.feature).collect(),
    }
}
