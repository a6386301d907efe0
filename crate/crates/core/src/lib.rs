//! Framework-independent toolkit for measuring adversarial robustness.
//!
//! The library answers one question about a classifier: how large is the
//! smallest input perturbation that changes its decision? It provides
//!
//! * model adapters ([`models`]) with a common prediction/gradient
//!   interface, including a finite-difference fallback for models without
//!   analytic gradients,
//! * adversarial criteria ([`criteria`]) defining what counts as a
//!   successful perturbation,
//! * normalized distance measures ([`distances`]) to quantify perturbation
//!   size independently of input scale,
//! * a catalog of attacks ([`attacks`]) spanning gradient-based,
//!   score-based and decision-based access levels, all tuning their own
//!   hyperparameters internally, and
//! * shared search state ([`adversarial`]) that tracks the best (smallest)
//!   adversarial found across any sequence of attacks, with exact model
//!   query accounting.
//!
//! Randomized components draw from [`rng::AttackRng`], which is seeded per
//! sample so results are reproducible and independent of scheduling.

pub mod adversarial;
pub mod attacks;
pub mod criteria;
pub mod distances;
pub mod math;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod tuning;

pub use adversarial::{AdversarialState, AttackError, AttackOutcome};
pub use attacks::{run_attack, AttackKind, AttackSuiteConfig};
pub use criteria::{AdversarialCriterion, Criterion, CriterionError};
pub use distances::{distance, DistanceMeasure, DistanceValue};
pub use models::{load_model, save_model, DynModel, Model, ModelError, ModelFile};
pub use rng::AttackRng;
pub use tensor::{Bounds, InputTensor, Label, TensorError};
pub use tuning::ScalarSearchConfig;
