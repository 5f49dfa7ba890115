//! Run manifests: the config hash that stamps every artifact, plus the
//! file inventory of a run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Canonical serialisation of a resolved config: every default made
/// explicit, the output directory cleared (the same experiment may land
/// anywhere). This exact text is what gets hashed and what a run records
/// as `resolved_config.toml`.
pub fn canonical_toml(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.output.directory = std::path::PathBuf::new();
    canonical.to_toml_string()
}

/// SHA-256 over the canonical serialisation. Seed overrides are part of
/// the identity; the output directory is not.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(canonical_toml(config).as_bytes());
    digest.iter().map(|b| format!("{:02x}", b)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    /// artifact file names relative to the output directory, in write order
    pub files: Vec<String>,
}
