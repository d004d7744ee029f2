//! Batch orchestration of the domain-randomization pipeline: scene
//! generation, randomization, oracle shading, renderer training, inference,
//! evaluation, inverse recovery and benchmarking.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::main_with;
pub use config::{LightMode, RunConfig};
pub use error::{CliError, Result};
