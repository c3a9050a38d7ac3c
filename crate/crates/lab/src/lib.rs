//! Experiment harness for the `blockmdp` crate: clustering experiments on the
//! two-cluster family, rate-function and concentration checks, and the
//! reward-free scaling run. Every table is emitted as a versioned CSV whose
//! body depends only on the configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod experiments;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] blockmdp::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
