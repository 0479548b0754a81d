//! Scenario runner: builds or loads an instance, runs a list of schemes on
//! it and writes traces plus a comparison summary.

pub mod error;
pub mod runner;
pub mod scenario;

pub use error::{exit, RunError, ScenarioError};
pub use runner::{build_instance, relative_gap, run_scenario, RunOptions, RunRecord, RunSummary};
pub use scenario::{parse_scenario, parse_scenario_str, InstanceSource, Scenario, SchemeRun, StartPoint};
