use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{
    dqn_train, greedy_policy, hybrid_train, ql_train, AgentError, AgentKind, DqnAgent, DqnConfig, HybridAgent,
    HybridSchedule, Monitor, Policy, QlAgent, QlConfig, TrainingLog,
};
use crate::catalog::{AccuracyConstraint, Catalog};
use crate::oracle::{Evaluated, JointConfiguration, MatchReport, Oracle};
use crate::simenv::{Environment, SimConfig, Topology};

/// Default real-step budgets for 3, 4 and 5 devices.
pub fn default_budget(n_devices: usize) -> u64 {
    match n_devices {
        0..=3 => 50_000,
        4 => 200_000,
        _ => 500_000,
    }
}

/// Hyperparameters of all three agent families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSettings {
    pub ql: QlConfig,
    pub dqn: DqnConfig,
    pub hybrid: HybridSchedule,
    /// When set, exploration anneals over this fraction of the real-step
    /// budget instead of the fixed horizons in `ql` and `dqn`.
    pub epsilon_fraction: Option<f64>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            ql: QlConfig::default(),
            dqn: DqnConfig::default(),
            hybrid: HybridSchedule::default(),
            epsilon_fraction: Some(0.5),
        }
    }
}

impl AgentSettings {
    /// Settings with the exploration horizon resolved against `budget`.
    pub fn for_budget(&self, budget: u64) -> AgentSettings {
        let mut s = self.clone();
        if let Some(f) = self.epsilon_fraction {
            let steps = ((budget as f64 * f).round() as u64).max(1);
            s.ql.epsilon.steps = steps;
            s.dqn.epsilon.steps = steps;
        }
        s
    }
}

/// Stopping rule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingRule {
    /// Real steps between greedy-policy evaluations.
    pub eval_every: u64,
    /// Consecutive matching evaluations needed.
    pub window: u32,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule { eval_every: 100, window: 3 }
    }
}

/// Outcome of training one agent on one cell with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub agent: AgentKind,
    pub seed: u64,
    pub converged: bool,
    /// Real steps taken when training stopped; equals the environment's
    /// own step counter.
    pub real_env_steps: u64,
    /// Real steps at the first evaluation of the matching streak.
    pub first_match_step: Option<u64>,
    /// Sum of the response times of all real steps, ms.
    pub experience_ms: f64,
    /// Value-function updates performed before training stopped.
    pub policy_updates: u64,
    pub model_updates: u64,
    /// Greedy configuration when training stopped.
    pub policy: JointConfiguration,
    pub report: MatchReport,
}

/// Evaluates the greedy policy every `eval_every` real steps and stops once
/// `window` evaluations in a row cost-match the optimum.
pub struct OracleMonitor<'a> {
    oracle: Oracle,
    optimum: &'a Evaluated,
    env: &'a Environment,
    topology: &'a Topology,
    constraint: AccuracyConstraint,
    rule: StoppingRule,
    streak: u32,
    streak_start: Option<u64>,
    pub converged_at: Option<u64>,
    pub evaluations: u64,
}

impl<'a> OracleMonitor<'a> {
    pub fn new(
        oracle: Oracle,
        optimum: &'a Evaluated,
        env: &'a Environment,
        topology: &'a Topology,
        constraint: AccuracyConstraint,
        rule: StoppingRule,
    ) -> OracleMonitor<'a> {
        OracleMonitor {
            oracle,
            optimum,
            env,
            topology,
            constraint,
            rule,
            streak: 0,
            streak_start: None,
            converged_at: None,
            evaluations: 0,
        }
    }

    pub fn evaluate(&mut self, policy: &dyn Policy) -> Result<(JointConfiguration, MatchReport), AgentError> {
        let config = greedy_policy(policy, self.env, self.topology)?;
        let report = self
            .oracle
            .policy_match(&config, self.optimum, self.topology, self.constraint)
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok((config, report))
    }
}

impl Monitor for OracleMonitor<'_> {
    fn after_real_step(&mut self, steps: u64, policy: &dyn Policy) -> Result<bool, AgentError> {
        if self.rule.eval_every == 0 || steps % self.rule.eval_every != 0 {
            return Ok(false);
        }
        self.evaluations += 1;
        let (_, report) = self.evaluate(policy)?;
        if report.matches() {
            self.streak += 1;
            let start = *self.streak_start.get_or_insert(steps);
            if self.streak >= self.rule.window.max(1) {
                self.converged_at = Some(start);
                return Ok(true);
            }
        } else {
            self.streak = 0;
            self.streak_start = None;
        }
        Ok(false)
    }
}

/// Environment, oracle optimum and settings shared by every seed of a cell.
pub struct Cell<'a> {
    pub sim: &'a SimConfig,
    pub catalog: &'a Catalog,
    pub topology: &'a Topology,
    pub constraint: AccuracyConstraint,
    pub optimum: &'a Evaluated,
    pub settings: &'a AgentSettings,
    pub rule: StoppingRule,
    pub budget: u64,
}

/// Trains one agent with one seed under the stopping rule.
pub fn run_cell(cell: &Cell<'_>, agent: AgentKind, seed: u64) -> Result<ConvergenceRecord, HarnessError> {
    let mut env = Environment::new(cell.sim.clone(), cell.catalog.clone());
    env.reset(cell.topology.clone(), seed)?;
    let layout = env.layout()?;
    let template = env.clone();
    let oracle = Oracle::new(cell.sim.clone(), cell.catalog.clone());
    let mut monitor = OracleMonitor::new(oracle, cell.optimum, &template, cell.topology, cell.constraint, cell.rule);
    let mut log = TrainingLog::new();
    let s = &cell.settings.for_budget(cell.budget);

    let final_policy: Box<dyn Policy> = match agent {
        AgentKind::Ql => {
            let mut a = QlAgent::new(s.ql.clone(), seed);
            ql_train(&mut a, &mut env, cell.constraint, cell.budget, &mut monitor, &mut log)?;
            Box::new(a)
        }
        AgentKind::Dqn => {
            let mut a = DqnAgent::<f64>::new(s.dqn.clone(), layout, seed)?;
            dqn_train(&mut a, &mut env, cell.constraint, cell.budget, &mut monitor, &mut log)?;
            Box::new(a)
        }
        AgentKind::Hl => {
            let mut a = HybridAgent::<f64>::new(s.dqn.clone(), s.hybrid.clone(), layout, seed)?;
            hybrid_train(&mut a, &mut env, cell.constraint, cell.budget, &mut monitor, &mut log)?;
            Box::new(a)
        }
    };
    let (policy, report) = monitor.evaluate(final_policy.as_ref())?;
    if log.real_env_steps != env.step_count() {
        return Err(HarnessError::Config(format!(
            "step accounting drifted: log {} vs environment {}",
            log.real_env_steps,
            env.step_count()
        )));
    }
    Ok(ConvergenceRecord {
        agent,
        seed,
        converged: monitor.converged_at.is_some(),
        real_env_steps: log.real_env_steps,
        first_match_step: monitor.converged_at,
        experience_ms: log.experience_us as f64 / 1000.0,
        policy_updates: log.policy_updates,
        model_updates: log.model_updates,
        policy,
        report,
    })
}
