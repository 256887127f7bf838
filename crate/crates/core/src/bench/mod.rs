//! Benchmark harness: configuration, sweeps and outputs.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, MethodConfig, MethodKind};
pub use output::{emit_csv, emit_plot, render_csv, render_svg, write_outputs, CSV_HEADER};
pub use runner::{allocate_nfe, run_experiment, RunReport};
