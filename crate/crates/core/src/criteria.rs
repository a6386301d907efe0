//! Adversarial criteria: decision rules for when an `[input, label]` pair
//! counts as adversarial.
//!
//! Five standard criteria are provided as the [`Criterion`] enum. Attacks
//! accept any implementation of [`AdversarialCriterion`], so callers can
//! supply custom predicates over `(logits, original label)`.

use crate::math::{argmax, softmax};
use crate::tensor::Label;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CriterionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
}

/// A decision rule over model predictions. `logits` are unnormalized class
/// scores; implementations that need probabilities apply softmax themselves.
pub trait AdversarialCriterion: Send + Sync {
    fn is_adversarial(&self, logits: &[f64], original: Label) -> bool;

    /// The class an inherently targeted attack should steer toward, when
    /// this criterion prescribes one.
    fn target(&self) -> Option<Label> {
        None
    }

    /// The probability threshold of the rule, when it has one. Attacks that
    /// drive class probabilities use it to pick a sufficient goal.
    fn probability_threshold(&self) -> Option<f64> {
        None
    }

    /// Config-file name, echoed into reports.
    fn name(&self) -> String;
}

/// The standard criteria. Probabilities are softmax of logits; "predicted
/// class" is the argmax with ties broken toward the smallest index;
/// threshold comparisons are strict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Criterion {
    /// Predicted class is not the original class.
    Misclassification,
    /// Original class is not among the top-k predicted classes.
    #[serde(rename = "top_k")]
    TopKMisclassification { k: usize },
    /// Probability of the original class is below `p`.
    OriginalClassProbability { p: f64 },
    /// Predicted class is the given target class.
    TargetClass { target: Label },
    /// Probability of the target class is above `p`.
    TargetClassProbability { target: Label, p: f64 },
}

impl Criterion {
    /// Checks parameter ranges against a model's class count.
    pub fn validate(&self, num_classes: usize) -> Result<(), CriterionError> {
        match self {
            Criterion::Misclassification => Ok(()),
            Criterion::TopKMisclassification { k } => {
                if *k == 0 || *k >= num_classes {
                    Err(CriterionError::InvalidParameter(format!(
                        "top_k requires 1 <= k < num_classes, got k={k} with {num_classes} classes"
                    )))
                } else {
                    Ok(())
                }
            }
            Criterion::OriginalClassProbability { p } => check_probability(*p),
            Criterion::TargetClass { target } => check_label(*target, num_classes),
            Criterion::TargetClassProbability { target, p } => {
                check_label(*target, num_classes)?;
                check_probability(*p)
            }
        }
    }

    /// Number of classes ranked strictly above `class` under the
    /// deterministic ranking (higher logit wins; equal logits rank the
    /// smaller index first).
    fn rank(logits: &[f64], class: usize) -> usize {
        logits
            .iter()
            .enumerate()
            .filter(|(i, &z)| {
                *i != class && (z > logits[class] || (z == logits[class] && *i < class))
            })
            .count()
    }
}

fn check_probability(p: f64) -> Result<(), CriterionError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(CriterionError::InvalidParameter(format!(
            "probability threshold must lie strictly in (0, 1), got {p}"
        )))
    }
}

fn check_label(label: Label, num_classes: usize) -> Result<(), CriterionError> {
    if label.index() < num_classes {
        Ok(())
    } else {
        Err(CriterionError::LabelOutOfRange {
            label: label.index(),
            num_classes,
        })
    }
}

impl AdversarialCriterion for Criterion {
    fn is_adversarial(&self, logits: &[f64], original: Label) -> bool {
        match self {
            Criterion::Misclassification => argmax(logits) != original.index(),
            Criterion::TopKMisclassification { k } => Self::rank(logits, original.index()) >= *k,
            Criterion::OriginalClassProbability { p } => {
                softmax(logits)[original.index()] < *p
            }
            Criterion::TargetClass { target } => argmax(logits) == target.index(),
            Criterion::TargetClassProbability { target, p } => {
                softmax(logits)[target.index()] > *p
            }
        }
    }

    fn target(&self) -> Option<Label> {
        match self {
            Criterion::TargetClass { target } => Some(*target),
            Criterion::TargetClassProbability { target, .. } => Some(*target),
            _ => None,
        }
    }

    fn probability_threshold(&self) -> Option<f64> {
        match self {
            Criterion::OriginalClassProbability { p } => Some(*p),
            Criterion::TargetClassProbability { p, .. } => Some(*p),
            _ => None,
        }
    }

    fn name(&self) -> String {
        match self {
            Criterion::Misclassification => "misclassification",
            Criterion::TopKMisclassification { .. } => "top_k",
            Criterion::OriginalClassProbability { .. } => "original_class_probability",
            Criterion::TargetClass { .. } => "target_class",
            Criterion::TargetClassProbability { .. } => "target_class_probability",
        }
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adv(c: &Criterion, logits: &[f64], original: usize) -> bool {
        c.is_adversarial(logits, Label(original))
    }

    #[test]
    fn misclassification_checks_argmax() {
        let c = Criterion::Misclassification;
        assert!(!adv(&c, &[1.0, 3.0, 2.0], 1));
        assert!(adv(&c, &[1.0, 3.0, 2.0], 0));
    }

    #[test]
    fn top_k_uses_rank_of_original() {
        let c = Criterion::TopKMisclassification { k: 2 };
        // class 2 is second-largest, so it stays within the top 2
        assert!(!adv(&c, &[0.1, 0.5, 0.4], 2));
        assert!(adv(&c, &[0.1, 0.5, 0.4], 0));
    }

    #[test]
    fn target_class_probability_uses_softmax() {
        let c = Criterion::TargetClassProbability {
            target: Label(1),
            p: 0.9,
        };
        // softmax([0, 4]) = [0.0180, 0.9820]
        assert!(adv(&c, &[0.0, 4.0], 0));
        let strict = Criterion::TargetClassProbability {
            target: Label(1),
            p: 0.99,
        };
        assert!(!adv(&strict, &[0.0, 4.0], 0));
    }

    #[test]
    fn original_class_probability_is_strictly_below() {
        let c = Criterion::OriginalClassProbability { p: 0.5 };
        assert!(!adv(&c, &[0.0, 0.0], 0)); // exactly 0.5 is not below
        assert!(adv(&c, &[0.0, 0.1], 0));
    }

    #[test]
    fn target_class_matches_argmax_with_tie_break() {
        let c = Criterion::TargetClass { target: Label(1) };
        assert!(adv(&c, &[0.0, 2.0], 0));
        // tie between 0 and 1 resolves to 0, so target 1 is not predicted
        assert!(!adv(&c, &[2.0, 2.0], 0));
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(Criterion::TopKMisclassification { k: 3 }.validate(3).is_err());
        assert!(Criterion::TopKMisclassification { k: 0 }.validate(3).is_err());
        assert!(Criterion::TopKMisclassification { k: 2 }.validate(3).is_ok());
        assert!(Criterion::OriginalClassProbability { p: 0.0 }.validate(2).is_err());
        assert!(Criterion::OriginalClassProbability { p: 1.0 }.validate(2).is_err());
        assert!(Criterion::TargetClass { target: Label(5) }.validate(3).is_err());
        assert!(Criterion::TargetClassProbability { target: Label(1), p: 0.5 }
            .validate(2)
            .is_ok());
    }

    #[test]
    fn config_names_round_trip() {
        let cases = vec![
            (Criterion::Misclassification, r#"{"name":"misclassification"}"#),
            (
                Criterion::TopKMisclassification { k: 3 },
                r#"{"name":"top_k","k":3}"#,
            ),
            (
                Criterion::OriginalClassProbability { p: 0.25 },
                r#"{"name":"original_class_probability","p":0.25}"#,
            ),
            (
                Criterion::TargetClass { target: Label(2) },
                r#"{"name":"target_class","target":2}"#,
            ),
            (
                Criterion::TargetClassProbability {
                    target: Label(1),
                    p: 0.75,
                },
                r#"{"name":"target_class_probability","target":1,"p":0.75}"#,
            ),
        ];
        for (criterion, json) in cases {
            assert_eq!(serde_json::to_string(&criterion).unwrap(), json);
            let parsed: Criterion = serde_json::from_str(json).unwrap();
            assert_eq!(parsed, criterion);
        }
    }

    /// Logits drawn from a coarse binary-fraction grid so that adding a
    /// constant is exact in floating point and verdicts must match exactly.
    fn grid_logits() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((-64i32..=64).prop_map(|i| i as f64 / 8.0), 2..8)
    }

    proptest! {
        #[test]
        fn misclassification_equals_top_1(logits in grid_logits(), orig_raw in 0usize..8) {
            let orig = Label(orig_raw % logits.len());
            let mis = Criterion::Misclassification;
            let top1 = Criterion::TopKMisclassification { k: 1 };
            prop_assert_eq!(
                mis.is_adversarial(&logits, orig),
                top1.is_adversarial(&logits, orig)
            );
        }

        #[test]
        fn verdicts_invariant_under_logit_shift(
            logits in grid_logits(),
            orig_raw in 0usize..8,
            shift_i in -32i32..=32,
        ) {
            let orig = Label(orig_raw % logits.len());
            let shift = shift_i as f64 / 8.0;
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let t = Label((orig_raw + 1) % logits.len());
            let criteria: Vec<Criterion> = vec![
                Criterion::Misclassification,
                Criterion::TopKMisclassification { k: 1.max(logits.len() - 1) },
                Criterion::OriginalClassProbability { p: 0.5 },
                Criterion::TargetClass { target: t },
                Criterion::TargetClassProbability { target: t, p: 0.5 },
            ];
            for c in &criteria {
                prop_assert_eq!(
                    c.is_adversarial(&logits, orig),
                    c.is_adversarial(&shifted, orig),
                    "criterion {:?} changed verdict under shift {}", c, shift
                );
            }
        }

        #[test]
        fn target_class_implies_misclassification(
            logits in grid_logits(),
            orig_raw in 0usize..8,
        ) {
            let orig = Label(orig_raw % logits.len());
            let target = Label((orig_raw + 1) % logits.len());
            prop_assume!(target != orig);
            let tc = Criterion::TargetClass { target };
            if tc.is_adversarial(&logits, orig) {
                prop_assert!(Criterion::Misclassification.is_adversarial(&logits, orig));
            }
        }
    }
}
