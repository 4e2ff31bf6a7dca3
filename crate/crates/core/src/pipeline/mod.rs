//! Cross-validated screening experiments.

mod config;
mod crossval;
mod report;

pub use config::{ExperimentConfig, FusionChoice, RepresentationChoice};
pub use crossval::{run_crossval, run_crossval_with_plan, ExperimentData, LeakGuard};
pub use report::{CrossvalReport, FoldResult};
