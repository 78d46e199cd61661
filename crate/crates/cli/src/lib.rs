//! Experiment orchestration for the harvester uncertainty pipeline: config
//! resolution, per-case seeding, the amplitude sweep and artifact emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod output;
pub mod pipeline;

pub use commands::{execute, main_with_args, resolve_config, run_variant, Command, Products, VariantOutcome};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use model::{FnModel, Harvester, Model};
pub use pipeline::Pipeline;
