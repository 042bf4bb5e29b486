//! Experiment harness: JSON configurations in, CSV tables out.

pub mod config;
pub mod error;
pub mod pool;
pub mod run;
pub mod selftest;
pub mod table;

pub use config::{load_config, parse_config, Command, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use run::{run_experiment, RunContext, RunSummary};
pub use selftest::{selftest, selftest_with, SelftestHooks, SelftestReport};
pub use table::{emit_csv, Cell, Row};
