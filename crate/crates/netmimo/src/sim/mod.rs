//! Monte Carlo simulation: configuration, the drop/slot driver and result
//! files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConstraintKind, ExperimentConfig, GreedyEvaluator, Scheme, SchedulerKind};
pub use output::emit_outputs;
pub use run::{
    derive_seed, run_experiment, DropResult, ExperimentResult, SchemeDropResult, SchemeSummary,
};
