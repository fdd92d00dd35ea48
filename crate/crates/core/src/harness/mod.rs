//! Configuration, initial data, orchestration and serialization.

pub mod config;
pub mod initial;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, RunConfig, RunMode};
pub use initial::{sample_initial, InitialCondition, PreparedInitial};
pub use run::{execute, Command, RunOutcome};
