//! Benchmark orchestration: loads the model and dataset, runs every attack
//! on every sample, and aggregates per-sample minimal perturbations into
//! the robustness score.
//!
//! Samples are independent work units; each is seeded from the global seed
//! and its dataset row index, so results do not depend on the parallelism
//! setting or on which other samples run.

use crate::config::{BenchmarkConfig, ConfigError, ResolvedAttack};
use crate::dataset::{load_dataset, Dataset, DatasetError};
use crate::report::{
    AttackRecord, BenchmarkReport, ConfigEcho, DatasetEcho, ReportError, SampleRecord,
};
use rayon::prelude::*;
use robustbench_core::adversarial::AdversarialState;
use robustbench_core::attacks::run_attack;
use robustbench_core::criteria::AdversarialCriterion;
use robustbench_core::distances::DistanceValue;
use robustbench_core::models::{load_model, DynModel, ModelError};
use robustbench_core::rng::AttackRng;
use robustbench_core::tensor::{InputTensor, Label};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot load model: {0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    /// Process exit code: 1 for configuration and parse problems the user
    /// can fix, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_)
            | RunError::Dataset(_)
            | RunError::Model(_)
            | RunError::Invalid(_) => 1,
            RunError::Report(_) | RunError::Internal(_) => 2,
        }
    }
}

/// Runs the full benchmark described by `config`. Relative paths are
/// resolved against `base_dir` (the config file's directory).
pub fn run_benchmark(config: &BenchmarkConfig, base_dir: &Path) -> Result<BenchmarkReport, RunError> {
    let model = load_model(base_dir.join(&config.model_path))?;
    let attacks = config.resolve_attacks(base_dir)?;
    if attacks.is_empty() {
        return Err(RunError::Invalid("the attack list is empty".to_string()));
    }
    let mut dataset = load_dataset(
        &base_dir.join(&config.dataset_path),
        config.dataset_format,
        config.labels_path.as_ref().map(|p| base_dir.join(p)).as_deref(),
        model.bounds(),
    )?;
    adopt_model_shape(&model, &mut dataset);
    validate(config, &model, &dataset)?;

    let criterion: Arc<dyn AdversarialCriterion> = Arc::new(config.criterion.clone());
    let limit = config.sample_limit.unwrap_or(dataset.inputs.len());
    let work: Vec<(usize, &InputTensor, Label)> = dataset
        .inputs
        .iter()
        .zip(&dataset.labels)
        .enumerate()
        .take(limit)
        .map(|(index, (input, &label))| (index, input, label))
        .collect();

    let evaluate = |(index, input, label): &(usize, &InputTensor, Label)| {
        evaluate_sample(
            &model,
            &criterion,
            config,
            &attacks,
            *index,
            input,
            *label,
        )
    };
    let samples: Vec<SampleRecord> = match config.parallelism {
        Some(0) => return Err(RunError::Invalid("parallelism must be at least 1".to_string())),
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| RunError::Internal(e.to_string()))?
            .install(|| work.par_iter().map(evaluate).collect()),
        None => work.par_iter().map(evaluate).collect(),
    };

    Ok(BenchmarkReport::assemble(echo(config, &dataset), samples))
}

/// Reshapes samples to the model's layout when only the arrangement
/// differs: flat CSV rows (or differently split image axes) are valid input
/// for any model with the same element count.
fn adopt_model_shape(model: &DynModel, dataset: &mut Dataset) {
    let expected: usize = model.input_shape().iter().product();
    for input in &mut dataset.inputs {
        if input.shape() != model.input_shape() && input.len() == expected {
            *input = InputTensor::new(input.data().to_vec(), model.input_shape().to_vec())
                .expect("element count already checked");
        }
    }
}

fn validate(
    config: &BenchmarkConfig,
    model: &DynModel,
    dataset: &Dataset,
) -> Result<(), RunError> {
    config
        .criterion
        .validate(model.num_classes())
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    for (index, input) in dataset.inputs.iter().enumerate() {
        if input.shape() != model.input_shape() {
            return Err(RunError::Invalid(format!(
                "sample {index} has shape {:?} but the model expects {:?}",
                input.shape(),
                model.input_shape()
            )));
        }
    }
    for (index, label) in dataset.labels.iter().enumerate() {
        if label.index() >= model.num_classes() {
            return Err(RunError::Invalid(format!(
                "sample {index} has label {} but the model has {} classes",
                label.index(),
                model.num_classes()
            )));
        }
    }
    Ok(())
}

fn echo(config: &BenchmarkConfig, dataset: &Dataset) -> ConfigEcho {
    ConfigEcho {
        model_path: config.model_path.display().to_string(),
        dataset: DatasetEcho {
            // echo the paths as configured, so the report is independent of
            // the directory the benchmark ran from
            path: config.dataset_path.display().to_string(),
            labels_path: config.labels_path.as_ref().map(|p| p.display().to_string()),
            format: dataset.source.format,
            count: dataset.source.count,
        },
        attacks: config.attacks.clone(),
        criterion: config.criterion.clone(),
        distance: config.distance.name().to_string(),
        global_seed: config.global_seed,
        sample_limit: config.sample_limit,
        parallelism: config.parallelism,
    }
}

fn finite_or_none(distance: DistanceValue) -> Option<f64> {
    distance.is_finite().then_some(distance.value)
}

/// Attacks one sample. Attacks run in sequence on a shared state, so each
/// later attack resumes from the best perturbation found so far and the
/// final best is the minimum over all of them. Per-attack errors are
/// recorded, never propagated.
fn evaluate_sample(
    model: &DynModel,
    criterion: &Arc<dyn AdversarialCriterion>,
    config: &BenchmarkConfig,
    attacks: &[ResolvedAttack],
    index: usize,
    input: &InputTensor,
    label: Label,
) -> SampleRecord {
    let mut state = match AdversarialState::new(
        model.clone(),
        criterion.clone(),
        config.distance,
        input.clone(),
        label,
    ) {
        Ok(state) => state,
        Err(_) => {
            // shapes and labels were validated up front, so the only way
            // state construction fails is the input being adversarial as-is
            return SampleRecord {
                index,
                label: label.index(),
                already_adversarial: true,
                rho: Some(0.0),
                attacks: Vec::new(),
            };
        }
    };

    let sample_rng = AttackRng::for_sample(config.global_seed, index as u64);
    let records = attacks
        .iter()
        .enumerate()
        .map(|(position, attack)| {
            let mut rng = sample_rng.substream(position as u64);
            let predictions_before = state.prediction_calls();
            let gradients_before = state.gradient_calls();
            let started = Instant::now();
            match run_attack(attack.kind, &mut state, &attack.settings, &mut rng) {
                Ok(outcome) => AttackRecord {
                    name: outcome.attack_name,
                    success: outcome.success,
                    distance: finite_or_none(outcome.distance),
                    tuned_parameters: outcome.tuned_parameters,
                    prediction_calls: outcome.prediction_calls,
                    gradient_calls: outcome.gradient_calls,
                    wall_time_seconds: outcome.wall_time_seconds,
                    error: None,
                },
                Err(error) => AttackRecord {
                    name: attack.kind.name().to_string(),
                    success: false,
                    distance: finite_or_none(state.best_distance()),
                    tuned_parameters: Default::default(),
                    prediction_calls: state.prediction_calls() - predictions_before,
                    gradient_calls: state.gradient_calls() - gradients_before,
                    wall_time_seconds: started.elapsed().as_secs_f64(),
                    error: Some(error.to_string()),
                },
            }
        })
        .collect();

    SampleRecord {
        index,
        label: label.index(),
        already_adversarial: false,
        rho: finite_or_none(state.best_distance()),
        attacks: records,
    }
}
