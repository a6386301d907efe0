//! Bookkeeping for one attacked sample: binds model, criterion, distance
//! measure and reference input, evaluates candidates, and tracks the best
//! adversarial found so far.
//!
//! Attacks never call the model directly; every prediction or gradient goes
//! through [`AdversarialState`] so that query counters stay exact and the
//! best-so-far can only improve. Re-running an attack on the same state
//! resumes from the stored best.

use crate::criteria::AdversarialCriterion;
use crate::distances::{distance, DistanceMeasure, DistanceValue};
use crate::models::{DynModel, ModelError};
use crate::tensor::{clip, InputTensor, Label};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("the reference input already satisfies the criterion")]
    AlreadyAdversarial,
    #[error("attack found no adversarial")]
    AttackFailed,
    #[error("loss gradient at the reference input is zero")]
    GradientZero,
    #[error("all class-boundary linearizations are degenerate")]
    DegenerateBoundary,
    #[error("attack requires a spatial input shape ([h, w] or [h, w, c])")]
    NotSpatialInput,
    #[error("no adversarial starting point found after {attempts} random draws")]
    StartingPointNotFound { attempts: usize },
    #[error("reference input has no entry in the precomputed table")]
    InputNotInTable,
    #[error("invalid bisection bracket: lo must be non-adversarial, hi adversarial")]
    InvalidBracket,
    #[error("candidate shape {actual:?} does not match reference shape {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One evaluated candidate: criterion verdict, measured distance, and the
/// logits it produced.
#[derive(Debug, Clone)]
pub struct Probe {
    pub is_adversarial: bool,
    pub distance: DistanceValue,
    pub logits: Vec<f64>,
    /// True when this probe improved the best-so-far.
    pub improved: bool,
}

/// Snapshot of the query counters, for per-attack accounting.
#[derive(Debug, Clone, Copy)]
pub struct CounterSnapshot {
    predictions: u64,
    gradients: u64,
    hits: u64,
}

/// Everything an attack produced on one sample: final (running) best
/// distance, whether this attack itself found an adversarial, the final
/// values of internally tuned hyperparameters, and query accounting.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub attack_name: String,
    /// Best distance on the state after this attack (running minimum).
    pub distance: DistanceValue,
    /// Whether this attack observed at least one adversarial probe.
    pub success: bool,
    pub tuned_parameters: BTreeMap<String, serde_json::Value>,
    pub prediction_calls: u64,
    pub gradient_calls: u64,
    pub wall_time_seconds: f64,
}

/// Tracks an attack's span over a state: counter baselines and start time.
pub struct AttackRun {
    name: String,
    start: CounterSnapshot,
    started_at: Instant,
}

impl AttackRun {
    pub fn finish(
        self,
        state: &AdversarialState,
        tuned_parameters: BTreeMap<String, serde_json::Value>,
    ) -> AttackOutcome {
        let now = state.counters();
        AttackOutcome {
            attack_name: self.name,
            distance: state.best_distance(),
            success: now.hits > self.start.hits,
            tuned_parameters,
            prediction_calls: now.predictions - self.start.predictions,
            gradient_calls: now.gradients - self.start.gradients,
            wall_time_seconds: self.started_at.elapsed().as_secs_f64(),
        }
    }
}

/// State of the search for a minimal adversarial against one sample.
pub struct AdversarialState {
    model: DynModel,
    criterion: Arc<dyn AdversarialCriterion>,
    measure: DistanceMeasure,
    original_input: InputTensor,
    original_label: Label,
    best_input: Option<InputTensor>,
    best_distance: DistanceValue,
    prediction_calls: u64,
    gradient_calls: u64,
    adversarial_hits: u64,
    /// Best distance after each probe; non-increasing by construction.
    trace: Vec<f64>,
    probe_log: Option<Vec<InputTensor>>,
}

impl AdversarialState {
    /// Binds the search objects and verifies that the reference input is
    /// not itself adversarial (one uncounted prediction).
    pub fn new(
        model: DynModel,
        criterion: Arc<dyn AdversarialCriterion>,
        measure: DistanceMeasure,
        original_input: InputTensor,
        original_label: Label,
    ) -> Result<Self, AttackError> {
        let logits = model.predictions(&original_input)?;
        if criterion.is_adversarial(&logits, original_label) {
            return Err(AttackError::AlreadyAdversarial);
        }
        Ok(Self {
            model,
            criterion,
            measure,
            original_input,
            original_label,
            best_input: None,
            best_distance: DistanceValue::infinite(measure),
            prediction_calls: 0,
            gradient_calls: 0,
            adversarial_hits: 0,
            trace: Vec::new(),
            probe_log: None,
        })
    }

    pub fn model(&self) -> &DynModel {
        &self.model
    }

    /// Replaces the model, returning the previous one. Used to attack a
    /// model through a gradient-estimating wrapper.
    pub fn swap_model(&mut self, model: DynModel) -> DynModel {
        std::mem::replace(&mut self.model, model)
    }

    pub fn criterion(&self) -> &Arc<dyn AdversarialCriterion> {
        &self.criterion
    }

    pub fn measure(&self) -> DistanceMeasure {
        self.measure
    }

    pub fn original_input(&self) -> &InputTensor {
        &self.original_input
    }

    pub fn original_label(&self) -> Label {
        self.original_label
    }

    pub fn best_input(&self) -> Option<&InputTensor> {
        self.best_input.as_ref()
    }

    pub fn best_distance(&self) -> DistanceValue {
        self.best_distance
    }

    pub fn prediction_calls(&self) -> u64 {
        self.prediction_calls
    }

    pub fn gradient_calls(&self) -> u64 {
        self.gradient_calls
    }

    /// Best-distance trace, one entry per probe.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Starts recording every probed candidate (for trajectory comparisons).
    pub fn enable_probe_log(&mut self) {
        self.probe_log = Some(Vec::new());
    }

    pub fn probe_log(&self) -> Option<&[InputTensor]> {
        self.probe_log.as_deref()
    }

    pub fn counters(&self) -> CounterSnapshot {
        CounterSnapshot {
            predictions: self.prediction_calls,
            gradients: self.gradient_calls,
            hits: self.adversarial_hits,
        }
    }

    /// Marks the start of an attack for outcome accounting.
    pub fn begin_run(&self, name: &str) -> AttackRun {
        AttackRun {
            name: name.to_string(),
            start: self.counters(),
            started_at: Instant::now(),
        }
    }

    /// Adopts a best found elsewhere (e.g. carried over from a previous
    /// state) if it is adversarial, in bounds, and an improvement.
    /// The verification prediction is uncounted.
    pub fn adopt_best(&mut self, candidate: &InputTensor) -> Result<bool, AttackError> {
        let clipped = clip(candidate, self.model.bounds());
        let logits = self.model.predictions(&clipped)?;
        if !self.criterion.is_adversarial(&logits, self.original_label) {
            return Ok(false);
        }
        let d = distance(self.measure, &self.original_input, &clipped, self.model.bounds())
            .map_err(|_| AttackError::ShapeMismatch {
                expected: self.original_input.shape().to_vec(),
                actual: candidate.shape().to_vec(),
            })?;
        if d < self.best_distance {
            self.best_input = Some(clipped);
            self.best_distance = d;
            return Ok(true);
        }
        Ok(false)
    }

    /// Counted prediction through the state's model.
    pub fn predictions(&mut self, x: &InputTensor) -> Result<Vec<f64>, AttackError> {
        self.prediction_calls += 1;
        Ok(self.model.predictions(x)?)
    }

    /// Counted loss-gradient evaluation.
    pub fn gradient(&mut self, x: &InputTensor, label: Label) -> Result<InputTensor, AttackError> {
        self.gradient_calls += 1;
        Ok(self.model.gradient(x, label)?)
    }

    /// Counted per-class logit gradient.
    pub fn logit_gradient(&mut self, x: &InputTensor, class: usize) -> Result<InputTensor, AttackError> {
        self.gradient_calls += 1;
        Ok(self.model.logit_gradient(x, class)?)
    }

    /// Counted fused forward + gradient (one prediction, one gradient).
    pub fn forward_and_gradient(
        &mut self,
        x: &InputTensor,
        label: Label,
    ) -> Result<(Vec<f64>, InputTensor), AttackError> {
        self.prediction_calls += 1;
        self.gradient_calls += 1;
        Ok(self.model.forward_and_gradient(x, label)?)
    }

    /// Counted loss evaluation (one prediction).
    pub fn loss(&mut self, x: &InputTensor, label: Label) -> Result<f64, AttackError> {
        self.prediction_calls += 1;
        Ok(self.model.loss(x, label)?)
    }

    /// Evaluates a candidate: clips to bounds, predicts (counted), applies
    /// the criterion, measures the distance of the clipped candidate, and
    /// updates the best when the candidate is adversarial and closer.
    pub fn probe(&mut self, candidate: &InputTensor) -> Result<Probe, AttackError> {
        if !candidate.same_shape(&self.original_input) {
            return Err(AttackError::ShapeMismatch {
                expected: self.original_input.shape().to_vec(),
                actual: candidate.shape().to_vec(),
            });
        }
        let clipped = clip(candidate, self.model.bounds());
        if let Some(log) = &mut self.probe_log {
            log.push(clipped.clone());
        }
        let logits = self.predictions(&clipped)?;
        let is_adversarial = self.criterion.is_adversarial(&logits, self.original_label);
        let d = distance(self.measure, &self.original_input, &clipped, self.model.bounds())
            .expect("shapes verified above");
        let mut improved = false;
        if is_adversarial {
            self.adversarial_hits += 1;
            if d < self.best_distance {
                self.best_input = Some(clipped);
                self.best_distance = d;
                improved = true;
            }
        }
        self.trace.push(self.best_distance.value);
        Ok(Probe {
            is_adversarial,
            distance: d,
            logits,
            improved,
        })
    }

    /// [`probe`](Self::probe) reduced to the verdict/distance pair.
    pub fn try_candidate(
        &mut self,
        candidate: &InputTensor,
    ) -> Result<(bool, DistanceValue), AttackError> {
        let p = self.probe(candidate)?;
        Ok((p.is_adversarial, p.distance))
    }
}
