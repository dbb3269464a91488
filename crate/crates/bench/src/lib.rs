//! Multi-run experiment harness: runs strategy arms over a test problem,
//! post-evaluates the final solutions and writes CSV, text and SVG reports.

pub mod config;
pub mod experiment;
pub mod report;
pub mod svg;

use thiserror::Error;

pub use config::{ConfigFile, ProblemKind, Settings, StrategyName};
pub use experiment::{execute, hit_rate, post_evaluate, Arm, BuiltProblem, ExperimentResults, ExperimentSpec, RunRecord};
pub use report::{write_outputs, AggregateReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] esbb_core::EsbbError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
