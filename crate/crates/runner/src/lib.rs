//! Experiment orchestration: config parsing and validation, experiment
//! dispatch, artifact persistence and run manifests.

pub mod artifacts;
pub mod config;
pub mod experiment;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{Diagnostic, ExperimentConfig, ExperimentKind};
pub use experiment::{replay, run, RunOutcome};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config validation failed:\n{}", .0.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Diagnostic>),
    #[error(transparent)]
    Grid(#[from] bohmlab_core::GridError),
    #[error(transparent)]
    Potential(#[from] bohmlab_core::PotentialError),
    #[error(transparent)]
    State(#[from] bohmlab_core::StateError),
    #[error(transparent)]
    Evolve(#[from] bohmlab_core::EvolveError),
    #[error(transparent)]
    PilotWave(#[from] bohmlab_core::PilotWaveError),
    #[error(transparent)]
    Ensemble(#[from] bohmlab_core::EnsembleError),
    #[error(transparent)]
    Perception(#[from] bohmlab_core::PerceptionError),
    #[error(transparent)]
    Inference(#[from] bohmlab_core::InferenceError),
}
