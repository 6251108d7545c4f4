//! Command-line front end: synthetic experiments, CSV aggregation and reports.

pub mod commands;
pub mod config;
pub mod forecast_csv;
pub mod output;
pub mod run;
pub mod sample;

pub use commands::{
    cmd_aggregate, cmd_gen_sample, cmd_report, cmd_synth, report_targets, Comparison, ReportSummary,
};
pub use config::{Mode, RunConfig, ScenarioSpec, SCHEMA_VERSION};
