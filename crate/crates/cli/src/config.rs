//! Benchmark configuration: the JSON file driving a run, plus the
//! translation of per-attack parameter overrides into attack settings.

use robustbench_core::attacks::{AttackKind, AttackSuiteConfig};
use robustbench_core::criteria::Criterion;
use robustbench_core::distances::DistanceMeasure;
use robustbench_core::tensor::InputTensor;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file does not parse: {0}")]
    Parse(String),
    #[error("unknown attack name: {0}")]
    UnknownAttack(String),
    #[error("attack {attack:?} has no parameter named {key:?}")]
    UnknownParameter { attack: String, key: String },
    #[error("parameter {key:?} of attack {attack:?} is invalid: {message}")]
    InvalidParameter {
        attack: String,
        key: String,
        message: String,
    },
    #[error("invalid criterion: {0}")]
    Criterion(String),
    #[error("unknown distance name: {0} (expected mse, mae, linf, or l0)")]
    UnknownDistance(String),
    #[error("cannot read precomputed table {path}: {source}")]
    TableRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("precomputed table {path} does not parse: {message}")]
    TableParse { path: PathBuf, message: String },
}

/// File format of the benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// One sample per row: integer label first, features after. A header
    /// row is detected by a non-numeric first cell.
    Csv,
    /// Big-endian IDX image/label file pair.
    Idx,
}

impl DatasetFormat {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Idx => "idx",
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "idx" => Ok(DatasetFormat::Idx),
            other => Err(format!("unknown dataset format: {other} (expected csv or idx)")),
        }
    }
}

/// One attack to run, with optional overrides of its default parameters.
/// Override keys name fields of the attack settings (for example
/// `grid_size`, `max_iterations`, `boundary_iterations`); the `precomputed`
/// attack additionally accepts `table`, a path to its candidate table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

/// The benchmark run description, read from a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub model_path: PathBuf,
    pub dataset_path: PathBuf,
    pub dataset_format: DatasetFormat,
    /// Labels file for IDX datasets. When omitted, the path is derived from
    /// `dataset_path` by the `images`→`labels`, `idx3`→`idx1` convention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    pub attacks: Vec<AttackSpec>,
    pub criterion: Criterion,
    pub distance: DistanceMeasure,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

impl BenchmarkConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Resolves every attack name against the catalog and materializes its
    /// settings with overrides applied. Paths inside overrides (the
    /// precomputed table) are resolved relative to `base_dir`.
    pub fn resolve_attacks(&self, base_dir: &Path) -> Result<Vec<ResolvedAttack>, ConfigError> {
        self.attacks
            .iter()
            .map(|spec| ResolvedAttack::new(spec, base_dir))
            .collect()
    }
}

/// An attack ready to run: catalog entry plus fully merged settings.
#[derive(Debug, Clone)]
pub struct ResolvedAttack {
    pub kind: AttackKind,
    pub spec: AttackSpec,
    pub settings: AttackSuiteConfig,
}

impl ResolvedAttack {
    fn new(spec: &AttackSpec, base_dir: &Path) -> Result<Self, ConfigError> {
        let kind = AttackKind::from_str(&spec.name)
            .map_err(|_| ConfigError::UnknownAttack(spec.name.clone()))?;
        let settings = apply_overrides(kind, &spec.overrides, base_dir)?;
        Ok(Self {
            kind,
            spec: spec.clone(),
            settings,
        })
    }
}

/// Routes override keys to the settings group that owns them. Scale-search
/// keys (`grid_size`, `refine_steps`, `max_scale`) apply to both the
/// gradient-attack search and the noise search of the decision attacks.
fn apply_overrides(
    kind: AttackKind,
    overrides: &serde_json::Map<String, serde_json::Value>,
    base_dir: &Path,
) -> Result<AttackSuiteConfig, ConfigError> {
    let mut settings = AttackSuiteConfig::new();
    let mut search = to_object(&settings.search);
    let mut noise_search = to_object(&settings.decision.noise_search);
    let mut gradient = to_object(&settings.gradient);
    let mut score = to_object(&settings.score);
    let mut decision = to_object(&settings.decision);

    let invalid = |key: &str, message: String| ConfigError::InvalidParameter {
        attack: kind.name().to_string(),
        key: key.to_string(),
        message,
    };

    for (key, value) in overrides {
        match key.as_str() {
            "fd_step" => {
                settings.fd_step = value
                    .as_f64()
                    .filter(|v| *v > 0.0)
                    .ok_or_else(|| invalid(key, "expected a positive number".to_string()))?;
            }
            "table" if kind == AttackKind::Precomputed => {
                let relative = value
                    .as_str()
                    .ok_or_else(|| invalid(key, "expected a file path string".to_string()))?;
                let path = base_dir.join(relative);
                settings.precomputed = Some(Arc::new(load_precomputed_table(&path)?));
            }
            _ if search.contains_key(key) => {
                search.insert(key.clone(), value.clone());
                noise_search.insert(key.clone(), value.clone());
            }
            _ if gradient.contains_key(key) => {
                gradient.insert(key.clone(), value.clone());
            }
            _ if score.contains_key(key) => {
                score.insert(key.clone(), value.clone());
            }
            _ if key != "noise_search" && decision.contains_key(key) => {
                decision.insert(key.clone(), value.clone());
            }
            _ => {
                return Err(ConfigError::UnknownParameter {
                    attack: kind.name().to_string(),
                    key: key.clone(),
                })
            }
        }
    }

    decision.insert(
        "noise_search".to_string(),
        serde_json::Value::Object(noise_search),
    );
    settings.search = from_object(search, kind, "scale search")?;
    settings.gradient = from_object(gradient, kind, "gradient attack settings")?;
    settings.score = from_object(score, kind, "score attack settings")?;
    settings.decision = from_object(decision, kind, "decision attack settings")?;
    Ok(settings)
}

fn to_object<T: Serialize>(value: &T) -> serde_json::Map<String, serde_json::Value> {
    match serde_json::to_value(value).expect("attack settings serialize") {
        serde_json::Value::Object(map) => map,
        other => unreachable!("attack settings serialize to an object, got {other}"),
    }
}

fn from_object<T: serde::de::DeserializeOwned>(
    map: serde_json::Map<String, serde_json::Value>,
    kind: AttackKind,
    group: &str,
) -> Result<T, ConfigError> {
    serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| {
        ConfigError::InvalidParameter {
            attack: kind.name().to_string(),
            key: group.to_string(),
            message: e.to_string(),
        }
    })
}

/// On-disk table for the `precomputed` attack: flat input/candidate arrays
/// sharing one shape.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    #[serde(default)]
    shape: Option<Vec<usize>>,
    pairs: Vec<TablePair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TablePair {
    input: Vec<f64>,
    candidate: Vec<f64>,
}

fn load_precomputed_table(path: &Path) -> Result<Vec<(InputTensor, InputTensor)>, ConfigError> {
    let parse_error = |message: String| ConfigError::TableParse {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::TableRead {
        path: path.to_path_buf(),
        source,
    })?;
    let file: TableFile = serde_json::from_str(&text).map_err(|e| parse_error(e.to_string()))?;
    file.pairs
        .into_iter()
        .enumerate()
        .map(|(i, pair)| {
            let shape = file
                .shape
                .clone()
                .unwrap_or_else(|| vec![pair.input.len()]);
            let input = InputTensor::new(pair.input, shape.clone())
                .map_err(|e| parse_error(format!("pair {i}: {e}")))?;
            let candidate = InputTensor::new(pair.candidate, shape)
                .map_err(|e| parse_error(format!("pair {i}: {e}")))?;
            Ok((input, candidate))
        })
        .collect()
}

/// Parses the `name[:v1[:v2]]` criterion syntax of the command line:
/// `misclassification`, `top_k:K`, `original_class_probability:P`,
/// `target_class:T`, `target_class_probability:T:P`.
pub fn parse_criterion_spec(spec: &str) -> Result<Criterion, ConfigError> {
    let error = |message: &str| ConfigError::Criterion(format!("{spec:?}: {message}"));
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(error(&format!(
                "criterion {name} takes {n} parameter(s), got {}",
                args.len()
            )))
        }
    };
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| error(&format!("expected a non-negative integer, got {s:?}")))
    };
    let parse_prob = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| error(&format!("expected a probability, got {s:?}")))
    };
    let criterion = match name {
        "misclassification" => {
            arity(0)?;
            Criterion::Misclassification
        }
        "top_k" => {
            arity(1)?;
            Criterion::TopKMisclassification {
                k: parse_usize(args[0])?,
            }
        }
        "original_class_probability" => {
            arity(1)?;
            Criterion::OriginalClassProbability {
                p: parse_prob(args[0])?,
            }
        }
        "target_class" => {
            arity(1)?;
            Criterion::TargetClass {
                target: robustbench_core::tensor::Label(parse_usize(args[0])?),
            }
        }
        "target_class_probability" => {
            arity(2)?;
            Criterion::TargetClassProbability {
                target: robustbench_core::tensor::Label(parse_usize(args[0])?),
                p: parse_prob(args[1])?,
            }
        }
        other => return Err(error(&format!("unknown criterion name {other:?}"))),
    };
    Ok(criterion)
}
