//! Experiment harness around `snowball-core`: manifest-driven batch runs,
//! an HTTP oracle client, a resumable results layout, and report tables.
//!
//! The `snowball` binary in this crate exposes four subcommands:
//! `mask` (derive a placement mask), `classify` (one verdict),
//! `attack` (run a manifest), and `report` (emit tables).

pub mod manifest;
pub mod records;
pub mod remote;
pub mod report;
pub mod runner;

pub use manifest::{ClassifierSpec, Manifest, ManifestError, PatchEntry, SignEntry};
pub use records::{CellRecord, CellStatus, RunMeta};
pub use remote::RemoteClassifier;
pub use report::{emit_tables, format_timing_cell, ReportError};
pub use runner::{build_oracle, run_experiment, RunOptions, RunSummary, RunnerError};
