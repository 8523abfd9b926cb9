//! Experiment orchestration: configuration ingestion, sweep execution,
//! persistence (CSV tables, plot files, JSON verdicts, a resumability
//! manifest) and report generation. The CLI in `src/main.rs` is a thin
//! wrapper over this module.

pub mod config;
pub mod report;
pub mod run;
pub mod verdict;

pub use config::ExperimentConfig;
pub use report::report;
pub use run::{run, RunSummary};
pub use verdict::{VerdictBlock, VerdictFile, VerdictStatus};
