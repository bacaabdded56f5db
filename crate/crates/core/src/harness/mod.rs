//! Experiment runner: trains agents on scenario cells, measures convergence
//! against the oracle, and writes report tables.

mod check;
mod experiment;
mod report;
mod run;

use thiserror::Error;

use crate::agents::AgentError;
use crate::oracle::OracleError;
use crate::simenv::EnvError;

pub use check::{run_checks, CheckOutcome, REFERENCE_CATALOG};
pub use experiment::{
    compare_agents, format_comparisons, median, optimum_for, reference_ratios, run_experiment, run_experiment_with,
    AgentSummary, Bound, Comparison, ExperimentSpec, Ratio,
};
pub use report::*;
pub use run::{default_budget, run_cell, AgentSettings, Cell, ConvergenceRecord, OracleMonitor, StoppingRule};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}
