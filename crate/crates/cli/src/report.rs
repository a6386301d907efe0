//! The benchmark report: per-sample, per-attack outcomes, the minimal
//! perturbation ρ(x) of each sample, and the aggregate robustness
//! R = mean of the finite ρ values.
//!
//! Finite distances serialize as numbers; a missing adversarial (distance
//! infinity) serializes as `null` so the document stays valid JSON. Key
//! order is fixed by the struct definitions, making reports with equal
//! content byte-identical.

use crate::config::{AttackSpec, DatasetFormat};
use robustbench_core::criteria::Criterion;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// The tool version embedded in every report. Comparisons of robustness
/// numbers across different versions are not meaningful.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report serialization failed: {0}")]
    Serialize(String),
}

/// Everything needed to reproduce a run, echoed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model_path: String,
    pub dataset: DatasetEcho,
    pub attacks: Vec<AttackSpec>,
    pub criterion: Criterion,
    pub distance: String,
    pub global_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEcho {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<String>,
    pub format: DatasetFormat,
    /// Samples in the file, before any `sample_limit`.
    pub count: usize,
}

/// One attack's result on one sample. `distance` is the best distance on
/// the sample after this attack ran (attacks share state, so it is the
/// running minimum and never increases along the list).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub name: String,
    pub success: bool,
    pub distance: Option<f64>,
    pub tuned_parameters: BTreeMap<String, serde_json::Value>,
    pub prediction_calls: u64,
    pub gradient_calls: u64,
    pub wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Row index in the dataset.
    pub index: usize,
    pub label: usize,
    /// The unperturbed input already satisfied the criterion; ρ = 0 and no
    /// attacks were run.
    pub already_adversarial: bool,
    /// Minimal perturbation ρ(x): the smallest distance over the sample's
    /// attacks, `null` when none succeeded.
    pub rho: Option<f64>,
    pub attacks: Vec<AttackRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ConfigEcho,
    pub evaluated_samples: usize,
    /// Samples on which every attack failed (ρ infinite). These are
    /// excluded from the robustness mean.
    pub failure_count: usize,
    /// R: the arithmetic mean of the finite ρ values, `null` when there is
    /// no finite ρ.
    pub robustness: Option<f64>,
    pub samples: Vec<SampleRecord>,
}

impl BenchmarkReport {
    /// Assembles the aggregate fields from the per-sample records.
    pub fn assemble(config: ConfigEcho, samples: Vec<SampleRecord>) -> Self {
        let finite: Vec<f64> = samples.iter().filter_map(|s| s.rho).collect();
        let robustness = if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<f64>() / finite.len() as f64)
        };
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config,
            evaluated_samples: samples.len(),
            failure_count: samples.iter().filter(|s| s.rho.is_none()).count(),
            robustness,
            samples,
        }
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| ReportError::Serialize(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    /// Writes the JSON document to `path`.
    pub fn emit(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json()?).map_err(|source| ReportError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}
