//! Experiment runner and verification suites behind the command-line tool.

mod config;
mod experiment;
pub mod verify;

pub use config::{Algorithm, DataFormat, ExperimentConfig, SigmaSource};
pub use experiment::{
    estimate_sigma_for, estimate_sigma_on, run_experiment, run_on_dataset, write_trace,
    write_trace_to, DerivedParams, RunSummary, TraceTable, TRACE_HEADER,
};
pub use verify::{run_verification, Check, Suite, SuiteReport, VerifyOptions};
