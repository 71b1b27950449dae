//! Library side of the `advsysid` binary: configuration, run manifests,
//! output writers and the four subcommands.

pub mod commands;
pub mod config;
pub mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use advsysid::dynamics::SystemSpec;
use serde::{Deserialize, Serialize};

use config::RunConfig;

/// Env var read for the default worker count.
pub const THREADS_ENV: &str = "ADVSYSID_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, config or input file. Exit code 2.
    Usage(String),
    /// Failure while computing or writing results. Exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub(crate) fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

/// Everything needed to rerun a command. Written first in every output
/// directory as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub tool_version: String,
    pub master_seed: u64,
    pub started_unix_secs: u64,
    pub threads: usize,
    /// Input trajectory of `fit` and `certify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled: Option<usize>,
    /// Ground truth of a simulated trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &RunConfig, config_path: &Path, out_dir: &Path, threads: usize) -> Self {
        Self {
            subcommand: subcommand.into(),
            config: config.clone(),
            config_path: config_path.to_path_buf(),
            out_dir: out_dir.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            master_seed: config.seed,
            started_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            threads,
            trajectory: None,
            sampled: None,
            system: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid manifest: {e}", path.display())))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
