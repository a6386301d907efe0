//! Flat numeric tensors, input bounds and class labels shared by every
//! attack and model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, data has {actual}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("element {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid bounds: min {min} must be strictly below max {max}")]
    InvalidBounds { min: f64, max: f64 },
}

/// A model input: a flat `f64` buffer plus its logical shape.
///
/// Attacks operate on the flat view; spatially-aware attacks (blur, pixel
/// attacks) require the shape to be `[height, width]` or
/// `[height, width, channels]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTensor {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl InputTensor {
    /// Builds a tensor, validating that the shape matches the buffer and
    /// that every element is finite.
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TensorError::NonFinite { index, value });
        }
        Ok(Self { data, shape })
    }

    /// 1-D tensor from a plain vector.
    pub fn from_vec(data: Vec<f64>) -> Result<Self, TensorError> {
        let shape = vec![data.len()];
        Self::new(data, shape)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same shape, new data buffer.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(data, self.shape.clone())
    }

    /// Interprets the shape as an image: `[h, w]` maps to one channel,
    /// `[h, w, c]` keeps its channel count. Returns `None` for other ranks.
    pub fn spatial_dims(&self) -> Option<(usize, usize, usize)> {
        match self.shape.as_slice() {
            [h, w] => Some((*h, *w, 1)),
            [h, w, c] => Some((*h, *w, *c)),
            _ => None,
        }
    }

    /// Flat index of channel `ch` at pixel `(row, col)` for a spatial shape.
    pub fn pixel_index(&self, row: usize, col: usize, ch: usize) -> usize {
        let (_, w, c) = self.spatial_dims().expect("spatial shape");
        (row * w + col) * c + ch
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

/// Inclusive per-element input range `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    min: f64,
    max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self, TensorError> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(TensorError::InvalidBounds { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Width of the allowed range, `max - min`.
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// Midpoint of the allowed range.
    pub fn midpoint(&self) -> f64 {
        (self.min + self.max) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min <= value && value <= self.max
    }

    pub fn contains_all(&self, x: &InputTensor) -> bool {
        x.data().iter().all(|&v| self.contains(v))
    }
}

/// A class index. Valid labels satisfy `index < num_classes` of the model
/// they are paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub usize);

impl Label {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Saturates every element into `bounds`. Elements already in range are
/// returned bit-for-bit unchanged.
pub fn clip(x: &InputTensor, bounds: Bounds) -> InputTensor {
    let data = x
        .data()
        .iter()
        .map(|&v| {
            if v < bounds.min() {
                bounds.min()
            } else if v > bounds.max() {
                bounds.max()
            } else {
                v
            }
        })
        .collect();
    InputTensor {
        data,
        shape: x.shape().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(min: f64, max: f64) -> Bounds {
        Bounds::new(min, max).unwrap()
    }

    #[test]
    fn clip_saturates_at_bounds() {
        let x = InputTensor::from_vec(vec![-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(clip(&x, b(0.0, 1.0)).data(), &[0.0, 0.5, 1.0]);
        let y = InputTensor::from_vec(vec![300.0, 128.0]).unwrap();
        assert_eq!(clip(&y, b(0.0, 255.0)).data(), &[255.0, 128.0]);
    }

    #[test]
    fn clip_is_identity_in_range() {
        let x = InputTensor::from_vec(vec![0.3, 0.7]).unwrap();
        let clipped = clip(&x, b(0.0, 1.0));
        assert_eq!(clipped.data(), x.data());
        // bit-for-bit: compare raw representations
        for (a, c) in x.data().iter().zip(clipped.data()) {
            assert_eq!(a.to_bits(), c.to_bits());
        }
    }

    #[test]
    fn tensor_rejects_shape_mismatch_and_nonfinite() {
        assert!(InputTensor::new(vec![1.0, 2.0], vec![3]).is_err());
        assert!(InputTensor::new(vec![1.0, f64::NAN], vec![2]).is_err());
        assert!(InputTensor::new(vec![1.0, f64::INFINITY], vec![2]).is_err());
    }

    #[test]
    fn bounds_require_min_below_max() {
        assert!(Bounds::new(1.0, 1.0).is_err());
        assert!(Bounds::new(2.0, 1.0).is_err());
        assert!(Bounds::new(0.0, 255.0).is_ok());
    }

    #[test]
    fn spatial_dims_cover_gray_and_color() {
        let gray = InputTensor::new(vec![0.0; 6], vec![2, 3]).unwrap();
        assert_eq!(gray.spatial_dims(), Some((2, 3, 1)));
        let color = InputTensor::new(vec![0.0; 12], vec![2, 2, 3]).unwrap();
        assert_eq!(color.spatial_dims(), Some((2, 2, 3)));
        let flat = InputTensor::from_vec(vec![0.0; 6]).unwrap();
        assert_eq!(flat.spatial_dims(), None);
        assert_eq!(color.pixel_index(1, 0, 2), 8);
    }

    proptest! {
        #[test]
        fn clip_is_idempotent(values in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let x = InputTensor::from_vec(values).unwrap();
            let bounds = b(-1.0, 1.0);
            let once = clip(&x, bounds);
            let twice = clip(&once, bounds);
            prop_assert_eq!(once.data(), twice.data());
        }

        #[test]
        fn clip_never_moves_in_range_elements(values in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let x = InputTensor::from_vec(values).unwrap();
            let clipped = clip(&x, b(0.0, 1.0));
            for (a, c) in x.data().iter().zip(clipped.data()) {
                prop_assert_eq!(a.to_bits(), c.to_bits());
            }
        }
    }
}
