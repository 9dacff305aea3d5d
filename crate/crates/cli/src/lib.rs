//! Batch driver for the certification toolkit: reads a run configuration,
//! executes one command or the whole pipeline, and writes `report.json`
//! plus CSV tables.

pub mod config;
pub mod run;

pub use config::{Command, ConfigError, ConfigFile, GeometryConfig, RunConfig, RunSection};
pub use run::{execute, run, Outcome, RunError, Setup, StageOutput, Verdict};
