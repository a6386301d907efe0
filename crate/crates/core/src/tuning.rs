//! Internal hyperparameter tuning shared by single-scalar attacks: an
//! ascending grid sweep over a step size followed by bisection refinement.
//!
//! Every probe goes through [`AdversarialState::try_candidate`], so the best
//! adversarial is updated as a side effect even when a probe is not the
//! minimal one.

use crate::adversarial::{AdversarialState, AttackError};
use crate::tensor::InputTensor;
use serde::{Deserialize, Serialize};

/// Parameters of the scalar search. `max_scale` is expressed in units of
/// the bounds range, so the same defaults fit `[0,1]` and `[0,255]` models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSearchConfig {
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_refine_steps")]
    pub refine_steps: u32,
    #[serde(default = "default_max_scale")]
    pub max_scale: f64,
}

fn default_grid_size() -> usize {
    100
}

fn default_refine_steps() -> u32 {
    20
}

fn default_max_scale() -> f64 {
    1.0
}

impl Default for ScalarSearchConfig {
    fn default() -> Self {
        Self {
            grid_size: default_grid_size(),
            refine_steps: default_refine_steps(),
            max_scale: default_max_scale(),
        }
    }
}

/// Generalized search: `adversarial_at(state, eps)` evaluates all of an
/// attack's candidates for step size `eps` (each via `try_candidate`) and
/// reports whether any was adversarial. The grid
/// `{max_scale * k / grid_size : k = 1..grid_size}` is swept in ascending
/// order; the first hit is refined by bisection against the previous grid
/// point (or 0). Returns the smallest step found adversarial.
pub fn search_minimal_epsilon(
    state: &mut AdversarialState,
    config: &ScalarSearchConfig,
    adversarial_at: &mut dyn FnMut(&mut AdversarialState, f64) -> Result<bool, AttackError>,
) -> Result<Option<f64>, AttackError> {
    let grid = config.grid_size.max(2);
    let mut previous = 0.0;
    for k in 1..=grid {
        let eps = config.max_scale * k as f64 / grid as f64;
        if adversarial_at(state, eps)? {
            let refined = bisect(state, previous, eps, config.refine_steps, adversarial_at)?;
            return Ok(Some(refined));
        }
        previous = eps;
    }
    Ok(None)
}

/// The common case: one candidate per step size.
pub fn line_search_minimal_epsilon(
    state: &mut AdversarialState,
    config: &ScalarSearchConfig,
    mut candidate_at: impl FnMut(f64) -> InputTensor,
) -> Result<Option<f64>, AttackError> {
    search_minimal_epsilon(state, config, &mut |s, eps| {
        Ok(s.try_candidate(&candidate_at(eps))?.0)
    })
}

/// Bisection refinement of a verified bracket: `candidate_at(hi)` must be
/// adversarial and `candidate_at(lo)` must not be (`lo` may be 0, denoting
/// the reference input). Returns the adversarial endpoint after `steps`
/// halvings, so the result exceeds the true boundary by at most
/// `(hi - lo) / 2^steps`.
pub fn binary_search_refine(
    state: &mut AdversarialState,
    lo: f64,
    hi: f64,
    steps: u32,
    mut candidate_at: impl FnMut(f64) -> InputTensor,
) -> Result<f64, AttackError> {
    let (hi_adversarial, _) = state.try_candidate(&candidate_at(hi))?;
    let (lo_adversarial, _) = state.try_candidate(&candidate_at(lo))?;
    if !hi_adversarial || lo_adversarial {
        return Err(AttackError::InvalidBracket);
    }
    bisect(state, lo, hi, steps, &mut |s, eps| {
        Ok(s.try_candidate(&candidate_at(eps))?.0)
    })
}

fn bisect(
    state: &mut AdversarialState,
    mut lo: f64,
    mut hi: f64,
    steps: u32,
    adversarial_at: &mut dyn FnMut(&mut AdversarialState, f64) -> Result<bool, AttackError>,
) -> Result<f64, AttackError> {
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if adversarial_at(state, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
