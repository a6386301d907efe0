//! Benchmark harness for the adversarial-robustness library: dataset
//! ingestion, benchmark orchestration across samples and attacks, and JSON
//! report emission.
//!
//! The binary front-end lives in `main.rs`; everything here is usable as a
//! library, which is how the integration tests drive full runs in-process.

pub mod config;
pub mod dataset;
pub mod report;
pub mod runner;

pub use config::{AttackSpec, BenchmarkConfig, ConfigError, DatasetFormat};
pub use dataset::{load_dataset, Dataset, DatasetError};
pub use report::{AttackRecord, BenchmarkReport, ReportError, SampleRecord, TOOL_VERSION};
pub use runner::{run_benchmark, RunError};
