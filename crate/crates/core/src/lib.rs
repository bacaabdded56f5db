//! Simulator and learning agents for deep-learning inference orchestration
//! across end devices, an edge server and a cloud node.

pub mod catalog;
pub mod simenv;
pub mod approx;
pub mod scalar;
pub mod oracle;
pub mod agents;
pub mod harness;
pub mod cli;

/// Concrete double-precision aliases for the generic core.
pub type Mlp = approx::Mlp<f64>;
pub type DqnAgent = agents::DqnAgent<f64>;
pub type HybridAgent = agents::HybridAgent<f64>;
pub type SystemModel = agents::SystemModel<f64>;
pub type PrioritizedBuffer = approx::PrioritizedBuffer<f64>;
