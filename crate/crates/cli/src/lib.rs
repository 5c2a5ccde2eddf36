//! Command-line front end for the cooperative relaying simulator.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{load_config, parse_config, Experiment, ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use experiments::{execute, prepare, Artifact, Prepared};

/// Seed used when neither the command line nor the config sets one.
pub const DEFAULT_SEED: u64 = 1;
