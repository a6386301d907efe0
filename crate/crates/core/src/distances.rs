//! Perturbation-size measures.
//!
//! All measures except L0 are computed on bounds-normalized values: each
//! element is divided by `max - min` of the allowed input range so that the
//! same perturbation reported on a `[0, 1]` model and a `[0, 255]` model has
//! the same size. L0 counts exactly-differing elements, which normalization
//! cannot change, so it is computed on raw values and reported as a raw
//! count.

use crate::tensor::{Bounds, InputTensor, TensorError};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMeasure {
    #[serde(rename = "mse")]
    MeanSquaredDistance,
    #[serde(rename = "mae")]
    MeanAbsoluteDistance,
    #[serde(rename = "linf")]
    LinfDistance,
    #[serde(rename = "l0")]
    L0Distance,
}

impl DistanceMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceMeasure::MeanSquaredDistance => "mse",
            DistanceMeasure::MeanAbsoluteDistance => "mae",
            DistanceMeasure::LinfDistance => "linf",
            DistanceMeasure::L0Distance => "l0",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "mse" => Some(DistanceMeasure::MeanSquaredDistance),
            "mae" => Some(DistanceMeasure::MeanAbsoluteDistance),
            "linf" => Some(DistanceMeasure::LinfDistance),
            "l0" => Some(DistanceMeasure::L0Distance),
            _ => None,
        }
    }
}

impl fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A measured perturbation size. `value` is `f64::INFINITY` when no
/// adversarial has been found yet; comparisons use a total order in which
/// infinity sorts after every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceValue {
    pub value: f64,
    pub measure: DistanceMeasure,
}

impl DistanceValue {
    pub fn infinite(measure: DistanceMeasure) -> Self {
        Self {
            value: f64::INFINITY,
            measure,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

impl PartialOrd for DistanceValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.value.total_cmp(&other.value))
    }
}

/// Computes the chosen measure between `x` and `y` under `bounds`.
pub fn distance(
    measure: DistanceMeasure,
    x: &InputTensor,
    y: &InputTensor,
    bounds: Bounds,
) -> Result<DistanceValue, TensorError> {
    if !x.same_shape(y) {
        return Err(TensorError::ShapeMismatch {
            shape: y.shape().to_vec(),
            expected: x.len(),
            actual: y.len(),
        });
    }
    let range = bounds.range();
    let n = x.len() as f64;
    let value = match measure {
        DistanceMeasure::MeanSquaredDistance => {
            x.data()
                .iter()
                .zip(y.data())
                .map(|(a, b)| {
                    let d = (a - b) / range;
                    d * d
                })
                .sum::<f64>()
                / n
        }
        DistanceMeasure::MeanAbsoluteDistance => {
            x.data()
                .iter()
                .zip(y.data())
                .map(|(a, b)| ((a - b) / range).abs())
                .sum::<f64>()
                / n
        }
        DistanceMeasure::LinfDistance => x
            .data()
            .iter()
            .zip(y.data())
            .fold(0.0_f64, |m, (a, b)| m.max(((a - b) / range).abs())),
        DistanceMeasure::L0Distance => {
            x.data().iter().zip(y.data()).filter(|(a, b)| a != b).count() as f64
        }
    };
    Ok(DistanceValue { value, measure })
}
