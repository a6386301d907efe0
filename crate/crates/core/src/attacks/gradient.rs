//! Gradient-based attacks: single-step and iterative loss-gradient steps,
//! boundary linearization, regularized-loss optimization, a constrained
//! quadratic formulation, and the saliency-map attack.

use crate::adversarial::{AdversarialState, AttackError, AttackOutcome};
use crate::attacks::{tuned, AttackSuiteConfig};
use crate::math::{argmax, l1_norm, l2_norm};
use crate::models::{cross_entropy_from_logits, NumericalGradientModel};
use crate::optim::{BoxLbfgs, Objective};
use crate::tensor::{clip, InputTensor, Label};
use crate::tuning::{line_search_minimal_epsilon, search_minimal_epsilon};
use serde_json::json;
use std::sync::Arc;

/// Gradients below this L2 norm are treated as identically zero.
const ZERO_GRADIENT_NORM: f64 = 1e-30;

/// How a raw gradient is turned into a unit-scale step direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    /// Divide by the L2 norm.
    Normalized,
    /// Take the elementwise sign.
    Sign,
}

fn direction(gradient: &[f64], mode: DirectionMode) -> Vec<f64> {
    match mode {
        DirectionMode::Normalized => {
            let norm = l2_norm(gradient);
            gradient.iter().map(|g| g / norm).collect()
        }
        DirectionMode::Sign => gradient
            .iter()
            .map(|g| {
                if *g > 0.0 {
                    1.0
                } else if *g < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

fn step_from(x0: &InputTensor, dir: &[f64], scale: f64, range: f64) -> InputTensor {
    let data = x0
        .data()
        .iter()
        .zip(dir)
        .map(|(x, d)| x + scale * range * d)
        .collect();
    x0.with_data(data).expect("direction matches input length")
}

fn one_shot_gradient_attack(
    state: &mut AdversarialState,
    mode: DirectionMode,
    name: &str,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run(name);
    let x0 = state.original_input().clone();
    let range = state.model().bounds().range();
    let g = state.gradient(&x0, state.original_label())?;
    if l2_norm(g.data()) < ZERO_GRADIENT_NORM {
        return Err(AttackError::GradientZero);
    }
    let dir = direction(g.data(), mode);
    let eps = line_search_minimal_epsilon(state, &config.search, |e| {
        step_from(&x0, &dir, e, range)
    })?;
    match eps {
        Some(e) => Ok(run.finish(state, tuned(&[("epsilon", json!(e))]))),
        None => Err(AttackError::AttackFailed),
    }
}

/// Single step along the normalized loss gradient; the step size is the
/// smallest adversarial scale found by grid search plus bisection.
pub fn gradient_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    one_shot_gradient_attack(state, DirectionMode::Normalized, "gradient", config)
}

/// Single step along the sign of the loss gradient (fast gradient sign
/// method) with the same minimal-scale search.
pub fn gradient_sign_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    one_shot_gradient_attack(state, DirectionMode::Sign, "fgsm", config)
}

/// Iterated gradient steps: for each candidate scale the gradient is
/// recomputed at every step, so with `max_iterations = 1` this reduces to
/// the one-shot attack.
pub fn iterative_gradient_attack(
    state: &mut AdversarialState,
    mode: DirectionMode,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let name = match mode {
        DirectionMode::Normalized => "iterative_gradient",
        DirectionMode::Sign => "iterative_fgsm",
    };
    let run = state.begin_run(name);
    let x0 = state.original_input().clone();
    let l0 = state.original_label();
    let bounds = state.model().bounds();
    let range = bounds.range();
    let g0 = state.gradient(&x0, l0)?;
    if l2_norm(g0.data()) < ZERO_GRADIENT_NORM {
        return Err(AttackError::GradientZero);
    }
    let max_iterations = config.gradient.max_iterations.max(1);
    let eps = search_minimal_epsilon(state, &config.search, &mut |s, eps| {
        let mut x = x0.clone();
        for step in 0..max_iterations {
            let g = if step == 0 {
                g0.clone()
            } else {
                s.gradient(&x, l0)?
            };
            if l2_norm(g.data()) < ZERO_GRADIENT_NORM {
                break;
            }
            let dir = direction(g.data(), mode);
            let next = clip(&step_from(&x, &dir, eps, range), bounds);
            if next == x {
                break; // fully saturated: further steps cannot move
            }
            x = next;
            if s.try_candidate(&x)?.0 {
                return Ok(true);
            }
        }
        Ok(false)
    })?;
    match eps {
        Some(e) => Ok(run.finish(
            state,
            tuned(&[
                ("epsilon", json!(e)),
                ("max_iterations", json!(max_iterations)),
            ]),
        )),
        None => Err(AttackError::AttackFailed),
    }
}

/// Norm in which the boundary-linearization attack measures its step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeepfoolNorm {
    L2,
    Linf,
}

/// Iterative linearization of the nearest decision boundary. Per iteration
/// the candidate class with the smallest linearized distance is chosen and
/// the accumulated step (with overshoot) is tested.
pub fn deepfool_attack(
    state: &mut AdversarialState,
    norm: DeepfoolNorm,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let name = match norm {
        DeepfoolNorm::L2 => "deepfool_l2",
        DeepfoolNorm::Linf => "deepfool_linf",
    };
    let run = state.begin_run(name);
    let x0 = state.original_input().clone();
    let l0 = state.original_label();
    let bounds = state.model().bounds();
    let n = x0.len();
    let overshoot = config.gradient.deepfool_overshoot;

    // Candidate classes: highest logits at the original input, label excluded.
    let logits0 = state.predictions(&x0)?;
    let mut order: Vec<usize> = (0..logits0.len()).collect();
    order.sort_by(|&a, &b| logits0[b].total_cmp(&logits0[a]).then(a.cmp(&b)));
    let candidates: Vec<usize> = order
        .into_iter()
        .filter(|&c| c != l0.index())
        .take(config.gradient.deepfool_candidate_classes)
        .collect();

    let mut r_total = vec![0.0; n];
    for iteration in 0..config.gradient.deepfool_max_iter {
        let x_data: Vec<f64> = x0.data().iter().zip(&r_total).map(|(x, r)| x + r).collect();
        let x = clip(&x0.with_data(x_data).expect("same length"), bounds);
        let logits = state.predictions(&x)?;
        let g0 = state.logit_gradient(&x, l0.index())?;

        let mut best: Option<(f64, Vec<f64>, f64)> = None; // (ratio, w, delta_f)
        for &k in &candidates {
            let gk = state.logit_gradient(&x, k)?;
            let w: Vec<f64> = gk.data().iter().zip(g0.data()).map(|(a, b)| a - b).collect();
            let delta_f = logits[k] - logits[l0.index()];
            let w_norm = match norm {
                DeepfoolNorm::L2 => l2_norm(&w),
                DeepfoolNorm::Linf => l1_norm(&w),
            };
            if w_norm < 1e-12 {
                continue;
            }
            let ratio = delta_f.abs() / w_norm;
            if best.as_ref().is_none_or(|(r, _, _)| ratio < *r) {
                best = Some((ratio, w, delta_f));
            }
        }
        let Some((_, w, delta_f)) = best else {
            return Err(AttackError::DegenerateBoundary);
        };

        let step: Vec<f64> = match norm {
            DeepfoolNorm::L2 => {
                let w2 = l2_norm(&w);
                w.iter().map(|wi| delta_f.abs() * wi / (w2 * w2)).collect()
            }
            DeepfoolNorm::Linf => {
                let w1 = l1_norm(&w);
                w.iter()
                    .map(|wi| delta_f.abs() * wi.signum() / w1)
                    .collect()
            }
        };
        for (r, s) in r_total.iter_mut().zip(&step) {
            *r += s;
        }

        let candidate_data: Vec<f64> = x0
            .data()
            .iter()
            .zip(&r_total)
            .map(|(x, r)| x + (1.0 + overshoot) * r)
            .collect();
        let candidate = x0.with_data(candidate_data).expect("same length");
        if state.try_candidate(&candidate)?.0 {
            return Ok(run.finish(
                state,
                tuned(&[
                    ("iterations", json!(iteration + 1)),
                    ("overshoot", json!(overshoot)),
                ]),
            ));
        }
    }
    Err(AttackError::AttackFailed)
}

/// Picks the class a targeted attack should drive the input towards when
/// the criterion does not dictate one: the class actually reached by the
/// plain gradient attack, or failing that the runner-up class at `x0`.
fn resolve_target(
    state: &mut AdversarialState,
    explicit: Option<Label>,
    config: &AttackSuiteConfig,
) -> Result<Label, AttackError> {
    if let Some(t) = explicit {
        return Ok(t);
    }
    let x0 = state.original_input().clone();
    let l0 = state.original_label();
    let bounds = state.model().bounds();
    if let Ok(outcome) = gradient_attack(state, config) {
        if let Some(eps) = outcome
            .tuned_parameters
            .get("epsilon")
            .and_then(serde_json::Value::as_f64)
        {
            let g = state.gradient(&x0, l0)?;
            let norm = l2_norm(g.data());
            if norm >= ZERO_GRADIENT_NORM {
                let dir = direction(g.data(), DirectionMode::Normalized);
                let candidate = clip(&step_from(&x0, &dir, eps, bounds.range()), bounds);
                let class = argmax(&state.predictions(&candidate)?);
                if class != l0.index() {
                    return Ok(Label(class));
                }
            }
        }
    }
    let logits = state.predictions(&x0)?;
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let second = order[1];
    Ok(Label(if second == l0.index() { order[0] } else { second }))
}

/// Shared scaffolding of the quasi-Newton drivers: evaluates objectives
/// through the state (so calls are counted), probes every accepted iterate,
/// and carries errors out of the optimizer.
struct ProbingDriver<'a> {
    state: &'a mut AdversarialState,
    shape: Vec<usize>,
    error: Option<AttackError>,
    hit: bool,
}

impl<'a> ProbingDriver<'a> {
    fn new(state: &'a mut AdversarialState) -> Self {
        let shape = state.original_input().shape().to_vec();
        Self {
            state,
            shape,
            error: None,
            hit: false,
        }
    }

    fn tensor(&self, x: &[f64]) -> InputTensor {
        InputTensor::new(x.to_vec(), self.shape.clone()).expect("optimizer preserves length")
    }

    fn probe(&mut self, x: &[f64]) {
        if self.error.is_some() {
            return;
        }
        let candidate = self.tensor(x);
        match self.state.try_candidate(&candidate) {
            Ok((adversarial, _)) => self.hit |= adversarial,
            Err(e) => self.error = Some(e),
        }
    }
}

/// Objective `L(x, target) + lambda * ||x - x0||^2` for the regularized
/// targeted attack.
struct RegularizedLoss<'a> {
    driver: ProbingDriver<'a>,
    x0: Vec<f64>,
    target: Label,
    lambda: f64,
}

impl Objective for RegularizedLoss<'_> {
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        if self.driver.error.is_some() {
            return (f64::INFINITY, vec![0.0; x.len()]);
        }
        let tensor = self.driver.tensor(x);
        let result = self
            .driver
            .state
            .forward_and_gradient(&tensor, self.target)
            .and_then(|(logits, grad)| {
                let ce = cross_entropy_from_logits(&logits, self.target)?;
                Ok((ce, grad))
            });
        match result {
            Ok((ce, grad)) => {
                let mut value = ce;
                let mut g = grad.data().to_vec();
                for (i, (xi, x0i)) in x.iter().zip(&self.x0).enumerate() {
                    let d = xi - x0i;
                    value += self.lambda * d * d;
                    g[i] += 2.0 * self.lambda * d;
                }
                (value, g)
            }
            Err(e) => {
                self.driver.error = Some(e);
                (f64::INFINITY, vec![0.0; x.len()])
            }
        }
    }

    fn on_iterate(&mut self, x: &[f64]) {
        self.driver.probe(x);
    }
}

/// Targeted attack minimizing cross-entropy towards the target plus a
/// squared-distance penalty, sweeping the regularization weight from
/// strongest to weakest and bisecting (in log space) for the largest
/// weight that still yields an adversarial.
pub fn lbfgs_attack(
    state: &mut AdversarialState,
    explicit_target: Option<Label>,
    config: &AttackSuiteConfig,
    name: &str,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run(name);
    let target = resolve_target(state, explicit_target, config)?;
    let x0 = state.original_input().clone();
    let bounds = state.model().bounds();
    let solver = BoxLbfgs {
        memory: 10,
        max_iterations: config.gradient.lbfgs_max_opt_iter,
        tolerance: 1e-8,
    };

    let optimize_at = |state: &mut AdversarialState, lambda: f64| -> Result<bool, AttackError> {
        let mut objective = RegularizedLoss {
            driver: ProbingDriver::new(state),
            x0: x0.data().to_vec(),
            target,
            lambda,
        };
        solver.minimize(bounds.min(), bounds.max(), x0.data(), &mut objective);
        if let Some(e) = objective.driver.error.take() {
            return Err(e);
        }
        Ok(objective.driver.hit)
    };

    let points = config.gradient.lbfgs_lambda_points.max(2);
    let (lo, hi) = (
        config.gradient.lbfgs_lambda_min,
        config.gradient.lbfgs_lambda_max,
    );
    let grid: Vec<f64> = (0..points)
        .map(|i| hi * (lo / hi).powf(i as f64 / (points - 1) as f64))
        .collect(); // descending

    let mut bracket = None;
    for (i, &lambda) in grid.iter().enumerate() {
        if optimize_at(state, lambda)? {
            bracket = Some((i, lambda));
            break;
        }
    }
    let Some((index, adversarial_lambda)) = bracket else {
        return Err(AttackError::AttackFailed);
    };

    let lambda_star = if index == 0 {
        adversarial_lambda // even the strongest regularization succeeds
    } else {
        // Largest adversarial weight lies between grid[index - 1] (failed)
        // and grid[index] (succeeded); bisect in log space.
        let mut lo_log = adversarial_lambda.ln();
        let mut hi_log = grid[index - 1].ln();
        for _ in 0..config.search.refine_steps {
            let mid = ((lo_log + hi_log) / 2.0).exp();
            if optimize_at(state, mid)? {
                lo_log = mid.ln();
            } else {
                hi_log = mid.ln();
            }
        }
        lo_log.exp()
    };

    Ok(run.finish(
        state,
        tuned(&[
            ("lambda", json!(lambda_star)),
            ("target", json!(target.index())),
        ]),
    ))
}

/// `lbfgs` run against a finite-difference view of the model, for models
/// without analytic gradients.
pub fn approx_lbfgs_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let target = state.criterion().target();
    let original = state.swap_model(Arc::new(NumericalGradientModel::new(
        state.model().clone(),
        config.fd_step,
    )));
    let result = lbfgs_attack(state, target, config, "approx_lbfgs");
    state.swap_model(original);
    result
}

/// Constraint `L(x0 + rho, target) = target_loss` handled by an augmented
/// Lagrangian over the squared perturbation norm.
struct ConstrainedPerturbation<'a> {
    driver: ProbingDriver<'a>,
    x0: Vec<f64>,
    target: Label,
    target_loss: f64,
    nu: f64,
    mu: f64,
}

impl ConstrainedPerturbation<'_> {
    /// Constraint value at `x` (uncounted bookkeeping happens in evaluate).
    fn constraint(&mut self, x: &[f64]) -> Result<f64, AttackError> {
        let tensor = self.driver.tensor(x);
        let loss = self.driver.state.loss(&tensor, self.target)?;
        Ok(loss - self.target_loss)
    }
}

impl Objective for ConstrainedPerturbation<'_> {
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        if self.driver.error.is_some() {
            return (f64::INFINITY, vec![0.0; x.len()]);
        }
        let tensor = self.driver.tensor(x);
        let result = self
            .driver
            .state
            .forward_and_gradient(&tensor, self.target)
            .and_then(|(logits, grad)| {
                let ce = cross_entropy_from_logits(&logits, self.target)?;
                Ok((ce, grad))
            });
        match result {
            Ok((ce, grad)) => {
                let c = ce - self.target_loss;
                let multiplier = self.nu + self.mu * c;
                let mut value = 0.0;
                let mut g = vec![0.0; x.len()];
                for i in 0..x.len() {
                    let d = x[i] - self.x0[i];
                    value += d * d;
                    g[i] = 2.0 * d + multiplier * grad.data()[i];
                }
                value += self.nu * c + 0.5 * self.mu * c * c;
                (value, g)
            }
            Err(e) => {
                self.driver.error = Some(e);
                (f64::INFINITY, vec![0.0; x.len()])
            }
        }
    }

    fn on_iterate(&mut self, x: &[f64]) {
        self.driver.probe(x);
    }
}

/// Probability the constrained attack drives the target class to. Slightly
/// above one half so the solution is adversarial with margin; raised when
/// the criterion itself demands a stronger probability.
fn slsqp_target_probability(state: &AdversarialState, target: Label) -> f64 {
    let base = 0.5002;
    let criterion = state.criterion();
    let goal = match (criterion.probability_threshold(), criterion.target()) {
        // needs p_target strictly above the criterion's threshold
        (Some(p), Some(t)) if t == target => Some(p + 0.01),
        // original-class threshold: push p_original below it by driving
        // the target probability past its complement
        (Some(p), None) => Some(1.0 - p + 0.01),
        _ => None,
    };
    goal.unwrap_or(base).clamp(base, 0.9999)
}

/// Minimal-norm perturbation subject to reaching a fixed target-class loss,
/// solved with an augmented-Lagrangian sequence of quasi-Newton solves.
pub fn slsqp_attack(
    state: &mut AdversarialState,
    explicit_target: Option<Label>,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("slsqp");
    let target = resolve_target(state, explicit_target, config)?;
    let target_probability = slsqp_target_probability(state, target);
    let target_loss = -target_probability.ln();
    let x0 = state.original_input().clone();
    let bounds = state.model().bounds();
    let solver = BoxLbfgs {
        memory: 10,
        max_iterations: config.gradient.lbfgs_max_opt_iter,
        tolerance: 1e-8,
    };

    let mut nu = 0.0;
    let mut mu = 1.0;
    let mut x_start = x0.data().to_vec();
    for _ in 0..=8 {
        let mut objective = ConstrainedPerturbation {
            driver: ProbingDriver::new(state),
            x0: x0.data().to_vec(),
            target,
            target_loss,
            nu,
            mu,
        };
        let solution = solver.minimize(bounds.min(), bounds.max(), &x_start, &mut objective);
        if let Some(e) = objective.driver.error.take() {
            return Err(e);
        }
        let residual = objective.constraint(&solution.x)?;
        if let Some(e) = objective.driver.error.take() {
            return Err(e);
        }
        if residual.abs() <= 1e-4 {
            return Ok(run.finish(
                state,
                tuned(&[
                    ("mu", json!(mu)),
                    ("nu", json!(nu)),
                    ("constraint_residual", json!(residual)),
                    ("target_loss", json!(target_loss)),
                    ("target", json!(target.index())),
                ]),
            ));
        }
        nu += mu * residual;
        mu *= 10.0;
        x_start = solution.x;
    }
    Err(AttackError::AttackFailed)
}

#[derive(Clone, Copy)]
enum SaliencyVariant {
    Increasing,
    Decreasing,
}

/// Greedy saliency-map attack: repeatedly perturbs the feature whose logit
/// gradients most favor the target class, in both increasing and decreasing
/// variants, keeping whichever adversarial is closer.
pub fn saliency_map_attack(
    state: &mut AdversarialState,
    explicit_target: Option<Label>,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("jsma");
    let target = resolve_target(state, explicit_target, config)?;
    let x0 = state.original_input().clone();
    let bounds = state.model().bounds();
    let theta = config.gradient.jsma_theta;
    let step = theta * bounds.range();
    let budget = config
        .gradient
        .jsma_max_perturbed_features
        .unwrap_or(x0.len())
        .max(1);
    // Enough steps to saturate every budgeted feature from either bound.
    let max_steps = ((1.0 / theta).ceil() as usize + 1) * budget;
    let num_classes = state.model().num_classes();

    let mut any_success = false;
    for variant in [SaliencyVariant::Increasing, SaliencyVariant::Decreasing] {
        let mut x = x0.clone();
        let mut touched = std::collections::BTreeSet::new();
        for _ in 0..max_steps {
            let alpha = state.logit_gradient(&x, target.index())?;
            let mut beta = vec![0.0; x.len()];
            for class in (0..num_classes).filter(|&c| c != target.index()) {
                let g = state.logit_gradient(&x, class)?;
                for (b, gi) in beta.iter_mut().zip(g.data()) {
                    *b += gi;
                }
            }

            let mut best: Option<(usize, f64)> = None;
            for (i, ((&a, &b), &xi)) in alpha.data().iter().zip(&beta).zip(x.data()).enumerate() {
                let score = match variant {
                    SaliencyVariant::Increasing if a > 0.0 && b < 0.0 && xi < bounds.max() => {
                        a * b.abs()
                    }
                    SaliencyVariant::Decreasing if a < 0.0 && b > 0.0 && xi > bounds.min() => {
                        -a * b
                    }
                    _ => 0.0,
                };
                if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
                    best = Some((i, score));
                }
            }
            let Some((feature, _)) = best else {
                break; // saliency map exhausted for this variant
            };
            if !touched.contains(&feature) && touched.len() == budget {
                break;
            }
            touched.insert(feature);

            let delta = match variant {
                SaliencyVariant::Increasing => step,
                SaliencyVariant::Decreasing => -step,
            };
            let mut data = x.data().to_vec();
            data[feature] = (data[feature] + delta).clamp(bounds.min(), bounds.max());
            x = x.with_data(data).expect("same length");
            if state.try_candidate(&x)?.0 {
                any_success = true;
                break;
            }
        }
    }

    if any_success {
        Ok(run.finish(
            state,
            tuned(&[
                ("theta", json!(theta)),
                ("target", json!(target.index())),
            ]),
        ))
    } else {
        Err(AttackError::AttackFailed)
    }
}
