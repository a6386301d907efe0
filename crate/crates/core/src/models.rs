//! The standardized predictions/gradients interface and the native
//! reference models implementing it.
//!
//! Models expose unnormalized logits; anything that needs probabilities
//! applies softmax itself. The only loss in scope is cross-entropy over
//! softmax, `L(x, l) = logsumexp(z(x)) - z(x)[l]`.

use crate::math::{dot, log_sum_exp, softmax};
use crate::tensor::{clip, Bounds, InputTensor, Label};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input shape {actual:?} does not match model input shape {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("model file parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Cross-entropy of `logits` against class `label`:
/// `logsumexp(logits) - logits[label]`. Always non-negative.
pub fn cross_entropy_from_logits(logits: &[f64], label: Label) -> Result<f64, ModelError> {
    if label.index() >= logits.len() {
        return Err(ModelError::LabelOutOfRange {
            label: label.index(),
            num_classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[label.index()])
}

/// Predictions-and-gradients provider. All methods are read-only and safe
/// to call concurrently.
pub trait Model: Send + Sync {
    fn num_classes(&self) -> usize;
    fn bounds(&self) -> Bounds;
    fn input_shape(&self) -> &[usize];

    /// Unnormalized logits, length `num_classes`.
    fn predictions(&self, x: &InputTensor) -> Result<Vec<f64>, ModelError>;

    /// Gradient of the cross-entropy loss w.r.t. the input.
    fn gradient(&self, x: &InputTensor, label: Label) -> Result<InputTensor, ModelError>;

    /// Gradient of the single logit `class` w.r.t. the input. Needed by
    /// attacks that linearize decision boundaries per class.
    fn logit_gradient(&self, x: &InputTensor, class: usize) -> Result<InputTensor, ModelError>;

    /// Fused predictions + loss gradient; equals the two separate calls.
    fn forward_and_gradient(
        &self,
        x: &InputTensor,
        label: Label,
    ) -> Result<(Vec<f64>, InputTensor), ModelError> {
        Ok((self.predictions(x)?, self.gradient(x, label)?))
    }

    /// Cross-entropy loss at `x` for class `label`.
    fn loss(&self, x: &InputTensor, label: Label) -> Result<f64, ModelError> {
        cross_entropy_from_logits(&self.predictions(x)?, label)
    }
}

/// Shared-ownership model handle used throughout the library.
pub type DynModel = Arc<dyn Model>;

fn check_shape(expected: &[usize], x: &InputTensor) -> Result<(), ModelError> {
    if x.shape() != expected {
        return Err(ModelError::ShapeMismatch {
            expected: expected.to_vec(),
            actual: x.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_label(label: Label, num_classes: usize) -> Result<(), ModelError> {
    if label.index() >= num_classes {
        return Err(ModelError::LabelOutOfRange {
            label: label.index(),
            num_classes,
        });
    }
    Ok(())
}

/// `logits(x) = weights . x + biases`, softmax on top for probabilities.
#[derive(Debug, Clone)]
pub struct LinearSoftmaxModel {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    bounds: Bounds,
    input_shape: Vec<usize>,
}

impl LinearSoftmaxModel {
    pub fn new(
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
        bounds: Bounds,
        input_shape: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let num_classes = weights.len();
        let input_dim: usize = input_shape.iter().product();
        if num_classes < 2 {
            return Err(ModelError::DimensionMismatch(format!(
                "a classifier needs at least 2 classes, got {num_classes}"
            )));
        }
        if biases.len() != num_classes {
            return Err(ModelError::DimensionMismatch(format!(
                "{} bias entries for {} classes",
                biases.len(),
                num_classes
            )));
        }
        if let Some(row) = weights.iter().find(|r| r.len() != input_dim) {
            return Err(ModelError::DimensionMismatch(format!(
                "weight row of length {} for input dimension {}",
                row.len(),
                input_dim
            )));
        }
        Ok(Self {
            weights,
            biases,
            bounds,
            input_shape,
        })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            kind: "linear".to_string(),
            num_classes: self.weights.len(),
            input_shape: self.input_shape.clone(),
            bounds: [self.bounds.min(), self.bounds.max()],
            layers: vec![LayerSpec {
                weights: self.weights.clone(),
                biases: self.biases.clone(),
                activation: Activation::Identity,
            }],
        }
    }
}

impl Model for LinearSoftmaxModel {
    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn predictions(&self, x: &InputTensor) -> Result<Vec<f64>, ModelError> {
        check_shape(&self.input_shape, x)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| dot(row, x.data()) + b)
            .collect())
    }

    fn gradient(&self, x: &InputTensor, label: Label) -> Result<InputTensor, ModelError> {
        check_label(label, self.num_classes())?;
        let p = softmax(&self.predictions(x)?);
        let mut g = vec![0.0; x.len()];
        for (c, row) in self.weights.iter().enumerate() {
            let coeff = p[c] - if c == label.index() { 1.0 } else { 0.0 };
            for (gi, wi) in g.iter_mut().zip(row) {
                *gi += coeff * wi;
            }
        }
        x.with_data(g).map_err(|_| ModelError::DimensionMismatch(
            "gradient buffer does not match input shape".to_string(),
        ))
    }

    fn logit_gradient(&self, x: &InputTensor, class: usize) -> Result<InputTensor, ModelError> {
        check_label(Label(class), self.num_classes())?;
        check_shape(&self.input_shape, x)?;
        x.with_data(self.weights[class].clone())
            .map_err(|_| ModelError::DimensionMismatch(
                "weight row does not match input shape".to_string(),
            ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            // subgradient 0 at the kink: derivative is 1 only for z > 0
            Activation::Identity => z,
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpLayer {
    /// Row-major `[out_dim][in_dim]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

/// Fully-connected network; the last layer's output (after its activation,
/// identity in practice) is the logit vector.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<MlpLayer>,
    bounds: Bounds,
    input_shape: Vec<usize>,
}

/// Per-layer activations and preactivations from a traced forward pass.
type ForwardTrace = (Vec<Vec<f64>>, Vec<Vec<f64>>);

impl MlpModel {
    pub fn new(
        layers: Vec<MlpLayer>,
        bounds: Bounds,
        input_shape: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::DimensionMismatch("no layers".to_string()));
        }
        let mut width: usize = input_shape.iter().product();
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.is_empty() {
                return Err(ModelError::DimensionMismatch(format!("layer {i} is empty")));
            }
            if let Some(row) = layer.weights.iter().find(|r| r.len() != width) {
                return Err(ModelError::DimensionMismatch(format!(
                    "layer {i} expects input width {width}, weight row has {}",
                    row.len()
                )));
            }
            if layer.biases.len() != layer.weights.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "layer {i}: {} biases for {} output units",
                    layer.biases.len(),
                    layer.weights.len()
                )));
            }
            width = layer.weights.len();
        }
        if width < 2 {
            return Err(ModelError::DimensionMismatch(format!(
                "a classifier needs at least 2 classes, got {width}"
            )));
        }
        Ok(Self {
            layers,
            bounds,
            input_shape,
        })
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    /// Forward pass keeping every preactivation, for backpropagation.
    fn forward_trace(&self, x: &InputTensor) -> Result<ForwardTrace, ModelError> {
        check_shape(&self.input_shape, x)?;
        let mut activations = vec![x.data().to_vec()];
        let mut preactivations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().unwrap();
            let z: Vec<f64> = layer
                .weights
                .iter()
                .zip(&layer.biases)
                .map(|(row, b)| dot(row, input) + b)
                .collect();
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            preactivations.push(z);
            activations.push(a);
        }
        Ok((preactivations, activations))
    }

    /// Backpropagates `output_seed` (dLoss/dlogits) to an input gradient.
    fn backpropagate(
        &self,
        preactivations: &[Vec<f64>],
        output_seed: Vec<f64>,
    ) -> Vec<f64> {
        let mut delta = output_seed;
        for (layer, z) in self.layers.iter().zip(preactivations).rev() {
            let dz: Vec<f64> = delta
                .iter()
                .zip(z)
                .map(|(d, &zv)| d * layer.activation.derivative(zv))
                .collect();
            let in_dim = layer.weights[0].len();
            let mut prev = vec![0.0; in_dim];
            for (row, dzi) in layer.weights.iter().zip(&dz) {
                for (pi, wi) in prev.iter_mut().zip(row) {
                    *pi += dzi * wi;
                }
            }
            delta = prev;
        }
        delta
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            kind: "mlp".to_string(),
            num_classes: self.num_classes(),
            input_shape: self.input_shape.clone(),
            bounds: [self.bounds.min(), self.bounds.max()],
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

impl Model for MlpModel {
    fn num_classes(&self) -> usize {
        self.layers.last().unwrap().weights.len()
    }

    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn predictions(&self, x: &InputTensor) -> Result<Vec<f64>, ModelError> {
        let (_, activations) = self.forward_trace(x)?;
        Ok(activations.into_iter().last().unwrap())
    }

    fn gradient(&self, x: &InputTensor, label: Label) -> Result<InputTensor, ModelError> {
        check_label(label, self.num_classes())?;
        let (preactivations, activations) = self.forward_trace(x)?;
        let logits = activations.last().unwrap();
        let mut seed = softmax(logits);
        seed[label.index()] -= 1.0;
        let g = self.backpropagate(&preactivations, seed);
        Ok(x.with_data(g).expect("gradient matches input shape"))
    }

    fn logit_gradient(&self, x: &InputTensor, class: usize) -> Result<InputTensor, ModelError> {
        check_label(Label(class), self.num_classes())?;
        let (preactivations, _) = self.forward_trace(x)?;
        let mut seed = vec![0.0; self.num_classes()];
        seed[class] = 1.0;
        let g = self.backpropagate(&preactivations, seed);
        Ok(x.with_data(g).expect("gradient matches input shape"))
    }
}

/// Predictions from one model, gradients from another. Both must agree on
/// classes, bounds, and input shape.
pub struct CompositeModel {
    forward: DynModel,
    backward: DynModel,
}

impl CompositeModel {
    pub fn new(forward: DynModel, backward: DynModel) -> Result<Self, ModelError> {
        if forward.num_classes() != backward.num_classes() {
            return Err(ModelError::DimensionMismatch(format!(
                "composite submodels disagree on classes: {} vs {}",
                forward.num_classes(),
                backward.num_classes()
            )));
        }
        if forward.input_shape() != backward.input_shape() {
            return Err(ModelError::DimensionMismatch(format!(
                "composite submodels disagree on input shape: {:?} vs {:?}",
                forward.input_shape(),
                backward.input_shape()
            )));
        }
        if forward.bounds() != backward.bounds() {
            return Err(ModelError::DimensionMismatch(
                "composite submodels disagree on bounds".to_string(),
            ));
        }
        Ok(Self { forward, backward })
    }
}

impl Model for CompositeModel {
    fn num_classes(&self) -> usize {
        self.forward.num_classes()
    }

    fn bounds(&self) -> Bounds {
        self.forward.bounds()
    }

    fn input_shape(&self) -> &[usize] {
        self.forward.input_shape()
    }

    fn predictions(&self, x: &InputTensor) -> Result<Vec<f64>, ModelError> {
        self.forward.predictions(x)
    }

    fn gradient(&self, x: &InputTensor, label: Label) -> Result<InputTensor, ModelError> {
        self.backward.gradient(x, label)
    }

    fn logit_gradient(&self, x: &InputTensor, class: usize) -> Result<InputTensor, ModelError> {
        self.backward.logit_gradient(x, class)
    }
}

/// Wraps a model so gradients come from central finite differences of the
/// inner model's loss (or logits), for attacking models whose analytic
/// gradients are unavailable.
pub struct NumericalGradientModel {
    inner: DynModel,
    /// Finite-difference step as a fraction of the bounds range.
    step: f64,
}

impl NumericalGradientModel {
    pub fn new(inner: DynModel, step: f64) -> Self {
        assert!(step > 0.0, "finite-difference step must be positive");
        Self { inner, step }
    }

    /// Central difference of `eval` along element `i`, with probes clipped
    /// to bounds and a one-sided fallback when `x` sits at saturation.
    fn difference(
        &self,
        x: &InputTensor,
        i: usize,
        eval: &mut dyn FnMut(&InputTensor) -> Result<f64, ModelError>,
    ) -> Result<f64, ModelError> {
        let bounds = self.inner.bounds();
        let h = self.step * bounds.range();
        let mut plus = x.data().to_vec();
        let mut minus = x.data().to_vec();
        plus[i] += h;
        minus[i] -= h;
        let x_plus = clip(&x.with_data(plus).unwrap(), bounds);
        let x_minus = clip(&x.with_data(minus).unwrap(), bounds);
        let span = x_plus.data()[i] - x_minus.data()[i];
        if span == 0.0 {
            return Ok(0.0);
        }
        Ok((eval(&x_plus)? - eval(&x_minus)?) / span)
    }
}

impl Model for NumericalGradientModel {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn bounds(&self) -> Bounds {
        self.inner.bounds()
    }

    fn input_shape(&self) -> &[usize] {
        self.inner.input_shape()
    }

    fn predictions(&self, x: &InputTensor) -> Result<Vec<f64>, ModelError> {
        self.inner.predictions(x)
    }

    fn gradient(&self, x: &InputTensor, label: Label) -> Result<InputTensor, ModelError> {
        check_label(label, self.num_classes())?;
        let inner = Arc::clone(&self.inner);
        let mut eval = move |probe: &InputTensor| inner.loss(probe, label);
        let mut g = vec![0.0; x.len()];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = self.difference(x, i, &mut eval)?;
        }
        Ok(x.with_data(g).expect("gradient matches input shape"))
    }

    fn logit_gradient(&self, x: &InputTensor, class: usize) -> Result<InputTensor, ModelError> {
        check_label(Label(class), self.num_classes())?;
        let inner = Arc::clone(&self.inner);
        let mut eval =
            move |probe: &InputTensor| Ok(inner.predictions(probe)?[class]);
        let mut g = vec![0.0; x.len()];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = self.difference(x, i, &mut eval)?;
        }
        Ok(x.with_data(g).expect("gradient matches input shape"))
    }
}

/// On-disk model description. A linear model is a single identity layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "type")]
    pub kind: String,
    pub num_classes: usize,
    pub input_shape: Vec<usize>,
    pub bounds: [f64; 2],
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl ModelFile {
    /// Validates the description and constructs the model it denotes.
    pub fn build(&self) -> Result<DynModel, ModelError> {
        let bounds = Bounds::new(self.bounds[0], self.bounds[1])
            .map_err(|e| ModelError::Parse(e.to_string()))?;
        let model: DynModel = match self.kind.as_str() {
            "linear" => {
                if self.layers.len() != 1 {
                    return Err(ModelError::Parse(format!(
                        "linear model must have exactly 1 layer, found {}",
                        self.layers.len()
                    )));
                }
                let layer = &self.layers[0];
                if layer.activation != Activation::Identity {
                    return Err(ModelError::Parse(
                        "linear model layer must use the identity activation".to_string(),
                    ));
                }
                Arc::new(LinearSoftmaxModel::new(
                    layer.weights.clone(),
                    layer.biases.clone(),
                    bounds,
                    self.input_shape.clone(),
                )?)
            }
            "mlp" => Arc::new(MlpModel::new(
                self.layers
                    .iter()
                    .map(|l| MlpLayer {
                        weights: l.weights.clone(),
                        biases: l.biases.clone(),
                        activation: l.activation,
                    })
                    .collect(),
                bounds,
                self.input_shape.clone(),
            )?),
            other => {
                return Err(ModelError::Parse(format!(
                    "unknown model type {other:?} (expected \"linear\" or \"mlp\")"
                )))
            }
        };
        if model.num_classes() != self.num_classes {
            return Err(ModelError::DimensionMismatch(format!(
                "file declares {} classes but layers produce {}",
                self.num_classes,
                model.num_classes()
            )));
        }
        Ok(model)
    }
}

/// Loads a model from its JSON file.
pub fn load_model(path: impl AsRef<Path>) -> Result<DynModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| ModelError::Parse(e.to_string()))?;
    file.build()
}

/// Writes a model description as JSON with full round-trip precision.
pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let text = serde_json::to_string_pretty(file)
        .map_err(|e| ModelError::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
