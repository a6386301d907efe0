//! Attack catalog: construction of minimal adversarial perturbations.
//!
//! Every attack shares one calling convention: it receives a mutable
//! [`AdversarialState`](crate::adversarial::AdversarialState) and reports an
//! [`AttackOutcome`](crate::adversarial::AttackOutcome). All candidates are
//! routed through the state, so the best adversarial found so far survives
//! across attacks and the model-call accounting stays exact. Attacks are
//! grouped by the access they need: gradient-based, score-based (probability
//! outputs only), and decision-based (top-label only).

pub mod decision;
pub mod gradient;
pub mod score;

use crate::adversarial::{AdversarialState, AttackError, AttackOutcome};
use crate::rng::AttackRng;
use crate::tensor::InputTensor;
use crate::tuning::ScalarSearchConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Identifies one attack in the catalog. The string form is the name used
/// in configuration files and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Gradient,
    Fgsm,
    IterativeGradient,
    IterativeFgsm,
    DeepfoolL2,
    DeepfoolLinf,
    Lbfgs,
    ApproxLbfgs,
    Slsqp,
    Jsma,
    SinglePixel,
    LocalSearch,
    Boundary,
    Pointwise,
    AdditiveUniform,
    AdditiveGaussian,
    SaltAndPepper,
    ContrastReduction,
    GaussianBlur,
    Precomputed,
}

impl AttackKind {
    /// Every attack, in catalog order.
    pub const CATALOG: [AttackKind; 20] = [
        AttackKind::Gradient,
        AttackKind::Fgsm,
        AttackKind::IterativeGradient,
        AttackKind::IterativeFgsm,
        AttackKind::DeepfoolL2,
        AttackKind::DeepfoolLinf,
        AttackKind::Lbfgs,
        AttackKind::ApproxLbfgs,
        AttackKind::Slsqp,
        AttackKind::Jsma,
        AttackKind::SinglePixel,
        AttackKind::LocalSearch,
        AttackKind::Boundary,
        AttackKind::Pointwise,
        AttackKind::AdditiveUniform,
        AttackKind::AdditiveGaussian,
        AttackKind::SaltAndPepper,
        AttackKind::ContrastReduction,
        AttackKind::GaussianBlur,
        AttackKind::Precomputed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Gradient => "gradient",
            AttackKind::Fgsm => "fgsm",
            AttackKind::IterativeGradient => "iterative_gradient",
            AttackKind::IterativeFgsm => "iterative_fgsm",
            AttackKind::DeepfoolL2 => "deepfool_l2",
            AttackKind::DeepfoolLinf => "deepfool_linf",
            AttackKind::Lbfgs => "lbfgs",
            AttackKind::ApproxLbfgs => "approx_lbfgs",
            AttackKind::Slsqp => "slsqp",
            AttackKind::Jsma => "jsma",
            AttackKind::SinglePixel => "single_pixel",
            AttackKind::LocalSearch => "local_search",
            AttackKind::Boundary => "boundary",
            AttackKind::Pointwise => "pointwise",
            AttackKind::AdditiveUniform => "additive_uniform",
            AttackKind::AdditiveGaussian => "additive_gaussian",
            AttackKind::SaltAndPepper => "salt_and_pepper",
            AttackKind::ContrastReduction => "contrast_reduction",
            AttackKind::GaussianBlur => "gaussian_blur",
            AttackKind::Precomputed => "precomputed",
        }
    }

    /// True for attacks that query model gradients (analytically or, for
    /// `approx_lbfgs`, through finite differences of the loss).
    pub fn uses_gradients(&self) -> bool {
        matches!(
            self,
            AttackKind::Gradient
                | AttackKind::Fgsm
                | AttackKind::IterativeGradient
                | AttackKind::IterativeFgsm
                | AttackKind::DeepfoolL2
                | AttackKind::DeepfoolLinf
                | AttackKind::Lbfgs
                | AttackKind::ApproxLbfgs
                | AttackKind::Slsqp
                | AttackKind::Jsma
        )
    }

    /// True for attacks that only consume the adversarial verdict, never the
    /// continuous model outputs.
    pub fn is_decision_based(&self) -> bool {
        matches!(
            self,
            AttackKind::Boundary
                | AttackKind::Pointwise
                | AttackKind::AdditiveUniform
                | AttackKind::AdditiveGaussian
                | AttackKind::SaltAndPepper
                | AttackKind::ContrastReduction
                | AttackKind::GaussianBlur
                | AttackKind::Precomputed
        )
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attack name: {0}")]
pub struct UnknownAttack(pub String);

impl FromStr for AttackKind {
    type Err = UnknownAttack;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::CATALOG
            .iter()
            .find(|kind| kind.name() == s)
            .copied()
            .ok_or_else(|| UnknownAttack(s.to_string()))
    }
}

/// Settings shared by the gradient-based attacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientAttackConfig {
    /// Step budget of the iterative gradient attacks per scale value.
    pub max_iterations: usize,
    pub deepfool_max_iter: usize,
    /// Relative overshoot applied to the accumulated boundary step.
    pub deepfool_overshoot: f64,
    /// Number of highest-logit classes considered as boundary targets.
    pub deepfool_candidate_classes: usize,
    /// Size of the descending regularization grid swept by `lbfgs`.
    pub lbfgs_lambda_points: usize,
    pub lbfgs_lambda_min: f64,
    pub lbfgs_lambda_max: f64,
    /// Iteration cap of each inner quasi-Newton solve.
    pub lbfgs_max_opt_iter: usize,
    /// Per-step feature change of the saliency attack, in range units.
    pub jsma_theta: f64,
    /// Cap on distinct features the saliency attack may modify.
    pub jsma_max_perturbed_features: Option<usize>,
}

impl Default for GradientAttackConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            deepfool_max_iter: 50,
            deepfool_overshoot: 0.02,
            deepfool_candidate_classes: 10,
            lbfgs_lambda_points: 30,
            lbfgs_lambda_min: 1e-3,
            lbfgs_lambda_max: 1e3,
            lbfgs_max_opt_iter: 150,
            jsma_theta: 0.1,
            jsma_max_perturbed_features: None,
        }
    }
}

/// Settings for the score-based attacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreAttackConfig {
    /// Chebyshev radius of the neighborhood re-activated around perturbed
    /// pixels in local search.
    pub ls_neighborhood: usize,
    pub ls_rounds: usize,
    /// Fraction of the per-pixel extreme applied when perturbing.
    pub ls_p: f64,
    /// Number of top-scoring pixels perturbed per round.
    pub ls_top_t: usize,
    /// Fraction of pixels forming the initial active set.
    pub ls_init_fraction: f64,
    /// Cap on pixels tried by the single-pixel attack.
    pub sp_max_pixels: Option<usize>,
}

impl Default for ScoreAttackConfig {
    fn default() -> Self {
        Self {
            ls_neighborhood: 5,
            ls_rounds: 150,
            ls_p: 1.0,
            ls_top_t: 5,
            ls_init_fraction: 0.1,
            sp_max_pixels: None,
        }
    }
}

/// Settings for the decision-based attacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionAttackConfig {
    pub boundary_iterations: usize,
    pub boundary_spherical_step: f64,
    pub boundary_source_step: f64,
    /// Multiplicative factor for step-size adaptation.
    pub boundary_step_adaptation: f64,
    /// Random restarts allowed when searching a starting point.
    pub boundary_start_attempts: usize,
    /// Scale search used by the additive-noise and repetition attacks.
    pub noise_search: ScalarSearchConfig,
    /// Blur strength at scale 1, in standard deviations (pixels).
    pub blur_sigma_max: f64,
    pub pointwise_rounds: usize,
    /// Random repetitions tried per salt-and-pepper fraction.
    pub sp_draws_per_fraction: usize,
}

impl Default for DecisionAttackConfig {
    fn default() -> Self {
        Self {
            boundary_iterations: 5000,
            boundary_spherical_step: 0.01,
            boundary_source_step: 0.01,
            boundary_step_adaptation: 1.5,
            boundary_start_attempts: 1000,
            noise_search: ScalarSearchConfig::default(),
            blur_sigma_max: 5.0,
            pointwise_rounds: 10,
            sp_draws_per_fraction: 10,
        }
    }
}

/// Full configuration of the attack catalog.
#[derive(Debug, Clone)]
pub struct AttackSuiteConfig {
    /// Scale search used by the gradient-direction attacks.
    pub search: ScalarSearchConfig,
    pub gradient: GradientAttackConfig,
    pub score: ScoreAttackConfig,
    pub decision: DecisionAttackConfig,
    /// Lookup table for the precomputed attack: `(input, candidate)` pairs
    /// matched against the original input by exact equality.
    pub precomputed: Option<Arc<Vec<(InputTensor, InputTensor)>>>,
    /// Relative step of the finite-difference gradient estimator.
    pub fd_step: f64,
}

impl AttackSuiteConfig {
    pub fn new() -> Self {
        Self {
            search: ScalarSearchConfig::default(),
            gradient: GradientAttackConfig::default(),
            score: ScoreAttackConfig::default(),
            decision: DecisionAttackConfig::default(),
            precomputed: None,
            fd_step: 1e-5,
        }
    }
}

impl Default for AttackSuiteConfig {
    fn default() -> Self {
        Self::new()
    }
}

/// Builds the tuned-parameter map recorded in an attack outcome.
pub(crate) fn tuned(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

/// Runs one attack against the shared state. The state's best adversarial
/// and call counters carry over between invocations, so running several
/// attacks in sequence accumulates the pointwise minimum.
pub fn run_attack(
    kind: AttackKind,
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    match kind {
        AttackKind::Gradient => gradient::gradient_attack(state, config),
        AttackKind::Fgsm => gradient::gradient_sign_attack(state, config),
        AttackKind::IterativeGradient => {
            gradient::iterative_gradient_attack(state, gradient::DirectionMode::Normalized, config)
        }
        AttackKind::IterativeFgsm => {
            gradient::iterative_gradient_attack(state, gradient::DirectionMode::Sign, config)
        }
        AttackKind::DeepfoolL2 => {
            gradient::deepfool_attack(state, gradient::DeepfoolNorm::L2, config)
        }
        AttackKind::DeepfoolLinf => {
            gradient::deepfool_attack(state, gradient::DeepfoolNorm::Linf, config)
        }
        AttackKind::Lbfgs => {
            let target = state.criterion().target();
            gradient::lbfgs_attack(state, target, config, "lbfgs")
        }
        AttackKind::ApproxLbfgs => gradient::approx_lbfgs_attack(state, config),
        AttackKind::Slsqp => {
            let target = state.criterion().target();
            gradient::slsqp_attack(state, target, config)
        }
        AttackKind::Jsma => {
            let target = state.criterion().target();
            gradient::saliency_map_attack(state, target, config)
        }
        AttackKind::SinglePixel => score::single_pixel_attack(state, config, rng),
        AttackKind::LocalSearch => score::local_search_attack(state, config, rng),
        AttackKind::Boundary => decision::boundary_attack(state, config, rng),
        AttackKind::Pointwise => decision::pointwise_attack(state, config, rng),
        AttackKind::AdditiveUniform => {
            decision::additive_noise_attack(state, decision::NoiseKind::Uniform, config, rng)
        }
        AttackKind::AdditiveGaussian => {
            decision::additive_noise_attack(state, decision::NoiseKind::Gaussian, config, rng)
        }
        AttackKind::SaltAndPepper => decision::salt_and_pepper_attack(state, config, rng),
        AttackKind::ContrastReduction => decision::contrast_reduction_attack(state, config),
        AttackKind::GaussianBlur => decision::gaussian_blur_attack(state, config),
        AttackKind::Precomputed => {
            let table = config
                .precomputed
                .as_deref()
                .ok_or(AttackError::InputNotInTable)?;
            decision::precomputed_attack(state, table)
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_round_trip() {
        for kind in AttackKind::CATALOG {
            assert_eq!(kind.name().parse::<AttackKind>().unwrap(), kind);
        }
        assert_eq!(AttackKind::CATALOG.len(), 20);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!("no_such_attack".parse::<AttackKind>().is_err());
    }

    #[test]
    fn access_level_partition_is_consistent() {
        for kind in AttackKind::CATALOG {
            assert!(
                !(kind.uses_gradients() && kind.is_decision_based()),
                "{kind} claims both gradient and decision access"
            );
        }
        let decision_count = AttackKind::CATALOG
            .iter()
            .filter(|k| k.is_decision_based())
            .count();
        assert_eq!(decision_count, 8);
    }

    #[test]
    fn config_overrides_reject_unknown_keys() {
        let err = serde_json::from_str::<GradientAttackConfig>("{\"bogus\": 1}");
        assert!(err.is_err());
    }

    #[test]
    fn configs_round_trip_through_json() {
        let config = GradientAttackConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        let back: GradientAttackConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.max_iterations, config.max_iterations);
        assert_eq!(back.jsma_max_perturbed_features, None);
    }
}
