//! Configuration loading, output files and the command entry points.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, Command, Outcome};
pub use config::{config_from_str, load_config, ExperimentConfig, RunConfig, Source};
pub use output::{decode_snapshot, encode_snapshot, RunManifest};
