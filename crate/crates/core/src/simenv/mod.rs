//! End-edge-cloud simulator: topology, latency model, Table-style state
//! encoding and the cost signal, behind a reset/step interface.

mod action;
mod env;
mod latency;
mod observation;
mod scenario;
mod topology;

use thiserror::Error;

pub use action::{OrchestrationAction, Target, ACTION_COUNT};
pub use env::{
    encode_state, reward, write_trace_csv, Environment, NodeLoad, ResourceState, StepOutcome,
    TraceRow,
};
pub use latency::{LatencyBreakdown, LatencyModel, NodeSpec, SimConfig, SimDuration};
pub use observation::{
    Component, DeviceObs, Observation, ObservationLayout, ServerObs, CPU_LEVELS,
};
pub use scenario::ScenarioSpec;
pub use topology::{LinkQuality, Scenario, Tier, Topology, MAX_DEVICES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("environment stepped before reset")]
    NotReset,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("i/o: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests;
