//! Scenario layer: declarative configs, world construction, the run driver,
//! and the thread-scaling benchmark.

pub mod bench;
pub mod build;
pub mod config;
pub mod run;

pub use build::{build_scenario, BuildError, BuiltScenario};
pub use config::{load_config, ConfigError, Protocol, ScenarioConfig, ScenarioKind};
pub use run::{run_scenario, RunError, RunOverrides, RunSummary};
