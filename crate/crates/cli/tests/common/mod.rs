//! Shared fixtures for the integration tests: linear classification cases
//! with a known minimal perturbation, small MLPs with balanced decision
//! regions, and assorted helpers.

#![allow(dead_code)]

use robustbench_core::adversarial::AdversarialState;
use robustbench_core::criteria::{AdversarialCriterion, Criterion};
use robustbench_core::distances::DistanceMeasure;
use robustbench_core::math::{argmax, l2_distance};
use robustbench_core::models::{
    Activation, DynModel, LinearSoftmaxModel, Model, ModelError, MlpLayer, MlpModel,
};
use robustbench_core::rng::AttackRng;
use robustbench_core::tensor::{Bounds, InputTensor, Label};
use std::sync::Arc;

pub fn unit_bounds() -> Bounds {
    Bounds::new(0.0, 1.0).unwrap()
}

/// A softmax classifier built so that the minimal perturbation of `x0` is
/// known exactly: the nearest decision boundary is a hyperplane at L2
/// distance `margin`, and every class beyond the first two is suppressed
/// far below it.
pub struct LinearCase {
    pub model: DynModel,
    pub x0: InputTensor,
    pub label: Label,
    /// Analytic minimal L2 perturbation.
    pub margin: f64,
    /// Logit difference gradient: logit(0) - logit(1) falls along +w_eff.
    pub w_eff: Vec<f64>,
}

impl LinearCase {
    /// Minimal scale of a signed step (the fast-gradient-sign direction)
    /// that reaches the boundary: margin * |w_eff|_2 / |w_eff|_1.
    pub fn sign_step_oracle(&self) -> f64 {
        let l1: f64 = self.w_eff.iter().map(|v| v.abs()).sum();
        let l2: f64 = self.w_eff.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.margin * l2 / l1
    }
}

/// Draws a case with `classes` classes on `dim` inputs in the unit box.
/// The reference point sits near the box center, the margin in
/// [0.05, 0.4], the boundary sharpness (gradient norm) in [1, 3].
pub fn linear_case(rng: &mut AttackRng, classes: usize, dim: usize) -> LinearCase {
    assert!(classes >= 2);
    let x0: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.45, 0.55)).collect();
    let margin = rng.uniform_in(0.05, 0.4);
    let sharpness = rng.uniform_in(1.0, 3.0);

    // random unit direction scaled to the chosen sharpness
    let mut w_eff: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = w_eff.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in w_eff.iter_mut() {
        *v *= sharpness / norm;
    }

    let base: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-0.5, 0.5)).collect();
    let w0: Vec<f64> = base.iter().zip(&w_eff).map(|(r, w)| r - 0.5 * w).collect();
    let w1: Vec<f64> = base.iter().zip(&w_eff).map(|(r, w)| r + 0.5 * w).collect();
    let w_dot_x0: f64 = w_eff.iter().zip(&x0).map(|(w, x)| w * x).sum();

    // logit(0) - logit(1) = margin * sharpness at x0, zero at L2 distance
    // `margin` along w_eff / |w_eff|
    let mut weights = vec![w0, w1];
    let mut biases = vec![margin * sharpness + w_dot_x0, 0.0];
    for _ in 2..classes {
        weights.push(base.clone());
        biases.push(-30.0);
    }

    let model = LinearSoftmaxModel::new(weights, biases, unit_bounds(), vec![dim]).unwrap();
    LinearCase {
        model: Arc::new(model),
        x0: InputTensor::from_vec(x0).unwrap(),
        label: Label(0),
        margin,
        w_eff,
    }
}

/// A fresh misclassification search state over the given measure.
pub fn fresh_state(case_model: &DynModel, x0: &InputTensor, label: Label) -> AdversarialState {
    state_with(case_model, x0, label, Criterion::Misclassification, DistanceMeasure::MeanSquaredDistance)
}

pub fn state_with(
    model: &DynModel,
    x0: &InputTensor,
    label: Label,
    criterion: Criterion,
    measure: DistanceMeasure,
) -> AdversarialState {
    AdversarialState::new(model.clone(), Arc::new(criterion), measure, x0.clone(), label)
        .expect("reference input must not be adversarial")
}

pub fn l2(a: &InputTensor, b: &InputTensor) -> f64 {
    l2_distance(a.data(), b.data())
}

/// A 2-layer perceptron (ReLU hidden layer) whose weights come from the
/// seeded generator. Starting from `seed`, seeds are tried in order until
/// every class occupies at least a fifth of a 21x21 grid over the box, so
/// the decision regions are usable for decision-based attacks.
pub fn balanced_mlp(classes: usize, hidden: usize, seed: u64) -> Arc<MlpModel> {
    for attempt in 0..100 {
        let mut rng = AttackRng::for_sample(seed + attempt, 0);
        let layer1 = MlpLayer {
            weights: (0..hidden)
                .map(|_| (0..2).map(|_| 3.0 * rng.normal()).collect())
                .collect(),
            biases: (0..hidden).map(|_| rng.uniform_in(-1.5, 1.5)).collect(),
            activation: Activation::Relu,
        };
        let layer2 = MlpLayer {
            weights: (0..classes)
                .map(|_| (0..hidden).map(|_| rng.normal()).collect())
                .collect(),
            biases: vec![0.0; classes],
            activation: Activation::Identity,
        };
        let model = MlpModel::new(vec![layer1, layer2], unit_bounds(), vec![2]).unwrap();

        let mut counts = vec![0usize; classes];
        for i in 0..21 {
            for j in 0..21 {
                let x = InputTensor::from_vec(vec![i as f64 / 20.0, j as f64 / 20.0]).unwrap();
                counts[argmax(&model.predictions(&x).unwrap())] += 1;
            }
        }
        if counts.iter().all(|&c| c * 5 >= 21 * 21) {
            return Arc::new(model);
        }
    }
    panic!("no balanced perceptron found near seed {seed}");
}

/// Grid points the model classifies with a clear argmax (no ties), paired
/// with that predicted class as their label. Points near the box faces are
/// excluded so attacks have room in every direction.
pub fn confident_points(model: &DynModel, limit: usize) -> Vec<(InputTensor, Label)> {
    let mut points = Vec::new();
    for i in 2..=8 {
        for j in 2..=8 {
            let x = InputTensor::from_vec(vec![i as f64 / 10.0, j as f64 / 10.0]).unwrap();
            let logits = model.predictions(&x).unwrap();
            let top = argmax(&logits);
            let runner_up = logits
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != top)
                .map(|(_, &z)| z)
                .fold(f64::NEG_INFINITY, f64::max);
            if logits[top] - runner_up > 0.05 {
                points.push((x, Label(top)));
                if points.len() == limit {
                    return points;
                }
            }
        }
    }
    points
}

/// Wraps a model so that only the decision survives: predictions become the
/// one-hot vector of the predicted class. Gradients are unavailable.
pub struct DecisionOnly(pub DynModel);

impl Model for DecisionOnly {
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    fn bounds(&self) -> Bounds {
        self.0.bounds()
    }

    fn input_shape(&self) -> &[usize] {
        self.0.input_shape()
    }

    fn predictions(&self, x: &InputTensor) -> Result<Vec<f64>, ModelError> {
        let logits = self.0.predictions(x)?;
        let mut one_hot = vec![0.0; logits.len()];
        one_hot[argmax(&logits)] = 1.0;
        Ok(one_hot)
    }

    fn gradient(&self, _x: &InputTensor, _label: Label) -> Result<InputTensor, ModelError> {
        Err(ModelError::Parse(
            "decision-only model exposes no gradients".to_string(),
        ))
    }

    fn logit_gradient(&self, _x: &InputTensor, _class: usize) -> Result<InputTensor, ModelError> {
        Err(ModelError::Parse(
            "decision-only model exposes no gradients".to_string(),
        ))
    }
}

/// A two-class model over a 3x3 input whose adversarial region requires
/// raising at least `support` of the three decisive features (indices 2, 5,
/// and 7) to the upper bound: the minimal L0 perturbation is exactly
/// `support`.
pub fn known_support_case(support: usize) -> (DynModel, InputTensor, Label) {
    assert!((1..=3).contains(&support));
    let decisive = [2usize, 5, 7];
    let strength = 4.0;
    let mut w0 = vec![0.0; 9];
    let mut w1 = vec![0.0; 9];
    for &i in &decisive {
        w0[i] = -0.5 * strength;
        w1[i] = 0.5 * strength;
    }
    // adversarial iff strength * sum(x[decisive]) > threshold; from
    // x0 = 0.3 everywhere, each full push adds 0.7, so `support` pushes are
    // needed and suffice
    let threshold = strength * (0.55 + 0.7 * support as f64);
    let model = LinearSoftmaxModel::new(
        vec![w0, w1],
        vec![threshold, 0.0],
        unit_bounds(),
        vec![3, 3],
    )
    .unwrap();
    let x0 = InputTensor::new(vec![0.3; 9], vec![3, 3]).unwrap();
    (Arc::new(model), x0, Label(0))
}

/// Recomputed verdict straight from the model, bypassing all state caches.
pub fn verify_adversarial(
    model: &DynModel,
    criterion: &dyn AdversarialCriterion,
    x: &InputTensor,
    label: Label,
) -> bool {
    criterion.is_adversarial(&model.predictions(x).unwrap(), label)
}
