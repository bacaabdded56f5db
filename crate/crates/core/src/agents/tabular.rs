use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainingEnv, action, select_action, Anneal, AgentError, Monitor, Phase, Policy, TrainingLog};
use crate::catalog::AccuracyConstraint;
use crate::simenv::{Observation, ACTION_COUNT};

/// Lazily grown table of action costs keyed by the discrete observation.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: HashMap<Observation, [f64; ACTION_COUNT]>,
    pub lr: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularTransition {
    pub state: Observation,
    pub action: usize,
    pub cost: f64,
    pub next_state: Observation,
}

impl QTable {
    pub fn new(lr: f64, gamma: f64) -> QTable {
        QTable { values: HashMap::new(), lr, gamma }
    }

    /// Unseen states read as all zeros.
    pub fn values(&self, s: &Observation) -> [f64; ACTION_COUNT] {
        self.values.get(s).copied().unwrap_or([0.0; ACTION_COUNT])
    }

    pub fn get(&self, s: &Observation, a: usize) -> f64 {
        self.values(s)[a]
    }

    pub fn set(&mut self, s: Observation, a: usize, v: f64) {
        self.values.entry(s).or_insert([0.0; ACTION_COUNT])[a] = v;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.values().all(|row| row.iter().all(|v| v.is_finite()))
    }
}

/// `Q(s,a) += lr * (c + gamma * min_a' Q(s',a') - Q(s,a))`.
pub fn tabular_q_update(table: &mut QTable, t: &TabularTransition) {
    let next_min = table.values(&t.next_state).iter().cloned().fold(f64::INFINITY, f64::min);
    let q = table.get(&t.state, t.action);
    let updated = q + table.lr * (t.cost + table.gamma * next_min - q);
    table.set(t.state.clone(), t.action, updated);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QlConfig {
    pub lr: f64,
    pub gamma: f64,
    pub epsilon: Anneal,
    /// Multiplies the ms cost before it enters the table.
    pub cost_scale: f64,
}

impl Default for QlConfig {
    fn default() -> Self {
        QlConfig {
            lr: 0.5,
            gamma: 0.9,
            epsilon: Anneal { start: 1.0, end: 0.05, steps: 5_000 },
            cost_scale: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QlAgent {
    pub config: QlConfig,
    pub table: QTable,
    rng: ChaCha8Rng,
    real_steps: u64,
}

impl QlAgent {
    pub fn new(config: QlConfig, seed: u64) -> QlAgent {
        QlAgent {
            table: QTable::new(config.lr, config.gamma),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            real_steps: 0,
        }
    }

    pub fn real_steps(&self) -> u64 {
        self.real_steps
    }
}

impl Policy for QlAgent {
    fn greedy_action(&self, observation: &Observation) -> Result<usize, AgentError> {
        Ok(super::argmin(&self.table.values(observation)))
    }
}

/// Online Q-learning on the real environment, one backup per step, until
/// `max_real_steps` or the monitor stops it.
pub fn ql_train<E: TrainingEnv>(
    agent: &mut QlAgent,
    env: &mut E,
    constraint: AccuracyConstraint,
    max_real_steps: u64,
    monitor: &mut dyn Monitor,
    log: &mut TrainingLog,
) -> Result<(), AgentError> {
    while agent.real_steps < max_real_steps {
        let s = env.observation()?.clone();
        let eps = agent.config.epsilon.value(agent.real_steps);
        let a = select_action(&agent.table.values(&s), eps, &mut agent.rng);
        let out = env.step(action(a)?, constraint)?;
        let t = TabularTransition {
            state: s,
            action: a,
            cost: out.reward * agent.config.cost_scale,
            next_state: out.next_observation,
        };
        tabular_q_update(&mut agent.table, &t);
        agent.real_steps += 1;
        log.real_step(0, Phase::Direct, out.reward, out.response_time.micros(), None);
        log.policy_updates += 1;
        if monitor.after_real_step(log.real_env_steps, agent)? {
            break;
        }
    }
    Ok(())
}
