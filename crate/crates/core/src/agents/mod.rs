//! Orchestration policies: tabular Q-learning, a deep Q-network, and the
//! hybrid agent that adds a learned system model and planning on top of it.

mod dqn;
mod hybrid;
mod log;
mod system_model;
mod tabular;


use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::ApproxError;
use crate::catalog::AccuracyConstraint;
use crate::oracle::JointConfiguration;
use crate::simenv::{EnvError, Environment, Observation, OrchestrationAction, StepOutcome, Topology};

pub use dqn::{direct_rl_session, dqn_train, DqnAgent, DqnConfig};
pub use hybrid::{hybrid_train, planning_session, session_counts, HybridAgent, HybridSchedule, PlanBuffer, SessionCounts};
pub use log::{LogRecord, Phase, TrainingLog};
pub use system_model::{suggest_actions, train_system_model, SystemModel};
pub use tabular::{ql_train, tabular_q_update, QTable, QlAgent, QlConfig, TabularTransition};

/// Rounds of greedy play before the recorded round in [`greedy_policy`].
pub const GREEDY_WARMUP_ROUNDS: usize = 10;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "QL")]
    Ql,
    #[serde(rename = "DQN")]
    Dqn,
    #[serde(rename = "HL")]
    Hl,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Ql, AgentKind::Dqn, AgentKind::Hl];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Ql => "QL",
            AgentKind::Dqn => "DQN",
            AgentKind::Hl => "HL",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "QL" => Ok(AgentKind::Ql),
            "DQN" | "DQL" => Ok(AgentKind::Dqn),
            "HL" | "DDQ" => Ok(AgentKind::Hl),
            _ => Err(AgentError::Config(format!("unknown agent {s:?}"))),
        }
    }
}

/// Index of the smallest value; the lowest index wins ties.
pub fn argmin<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Indices sorted by ascending value, ties by index.
pub fn argsort<T: PartialOrd + Copy>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx
}

/// Epsilon-greedy choice over action costs. One uniform draw decides
/// whether to explore, a second picks the random action.
pub fn select_action<T: PartialOrd + Copy, R: Rng + ?Sized>(values: &[T], epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..values.len())
    } else {
        argmin(values)
    }
}

/// Linear interpolation from `start` to `end` over `steps`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anneal {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl Anneal {
    pub fn value(&self, step: u64) -> f64 {
        if self.steps == 0 || step >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.steps as f64
    }
}

/// What the training loops need from an environment.
pub trait TrainingEnv {
    fn observation(&self) -> Result<&Observation, EnvError>;
    fn step(&mut self, action: OrchestrationAction, constraint: AccuracyConstraint) -> Result<StepOutcome, EnvError>;
}

impl TrainingEnv for Environment {
    fn observation(&self) -> Result<&Observation, EnvError> {
        Environment::observation(self)
    }

    fn step(&mut self, action: OrchestrationAction, constraint: AccuracyConstraint) -> Result<StepOutcome, EnvError> {
        Environment::step(self, action, constraint)
    }
}

/// Read-only access to an agent's current greedy decision.
pub trait Policy {
    fn greedy_action(&self, observation: &Observation) -> Result<usize, AgentError>;
}

/// Called after every real environment step. Returning `true` stops training.
pub trait Monitor {
    fn after_real_step(&mut self, real_env_steps: u64, policy: &dyn Policy) -> Result<bool, AgentError>;
}

/// A monitor that never stops training.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoMonitor;

impl Monitor for NoMonitor {
    fn after_real_step(&mut self, _: u64, _: &dyn Policy) -> Result<bool, AgentError> {
        Ok(false)
    }
}

/// Plays the greedy policy on a fresh copy of `env` and records one round
/// of decisions, device 0 first, after [`GREEDY_WARMUP_ROUNDS`] rounds.
pub fn greedy_policy(policy: &dyn Policy, env: &Environment, topology: &Topology) -> Result<JointConfiguration, AgentError> {
    let mut sim = Environment::new(env.config().clone(), env.catalog().clone());
    let n = topology.n_devices();
    sim.reset(topology.clone(), 0)?;
    let mut actions = Vec::with_capacity(n);
    for step in 0..(GREEDY_WARMUP_ROUNDS + 1) * n {
        let a = policy.greedy_action(sim.observation()?)?;
        let action = OrchestrationAction::from_index(a)
            .ok_or_else(|| AgentError::Config(format!("policy chose action {a}")))?;
        sim.step(action, AccuracyConstraint::Min)?;
        if step >= GREEDY_WARMUP_ROUNDS * n {
            actions.push(action);
        }
    }
    Ok(JointConfiguration::new(actions))
}

pub(crate) fn action(index: usize) -> Result<OrchestrationAction, AgentError> {
    OrchestrationAction::from_index(index).ok_or_else(|| AgentError::Config(format!("action {index} out of range")))
}

/// Adds a hard step budget to another monitor.
pub(crate) struct Bounded<'a> {
    pub inner: &'a mut dyn Monitor,
    pub max_real_steps: u64,
}

impl Monitor for Bounded<'_> {
    fn after_real_step(&mut self, steps: u64, policy: &dyn Policy) -> Result<bool, AgentError> {
        let stop = self.inner.after_real_step(steps, policy)?;
        Ok(stop || steps >= self.max_real_steps)
    }
}
