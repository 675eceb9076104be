//! Monte-Carlo experiments, result tables and the acceptance checks.

pub mod config;
pub mod emit;
pub mod scenario;
pub mod verify;

pub use config::{log_grid, Scenario, ScenarioConfig};
pub use emit::{emit, Format};
pub use scenario::{gen_channels, run_scenario, ResultRow, ScenarioReport};
