use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainingEnv, 
    action, argmin, direct_rl_session, suggest_actions, AgentError, Bounded, DqnAgent, DqnConfig, Monitor, Phase,
    Policy, SystemModel, TrainingLog,
};
use crate::approx::{PrioritizedBuffer, Transition, UniformBuffer};
use crate::catalog::AccuracyConstraint;
use crate::scalar::Real;
use crate::simenv::{Observation, ObservationLayout, ACTION_COUNT};

/// Schedule constants of the hybrid training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridSchedule {
    /// Epochs over which `alpha` ramps to 1.
    pub n_epochs: u64,
    pub n_direct: usize,
    pub t_direct: usize,
    pub n_world: usize,
    pub n_suggest: usize,
    pub t_suggest: usize,
    pub n_plan: usize,
    pub k: usize,
    /// Overrides `alpha` for every epoch.
    pub force_alpha: Option<f64>,
    /// Stop after this many epochs; `None` runs until the step budget.
    pub max_epochs: Option<u64>,
    pub model_hidden: Vec<usize>,
    pub model_batch: usize,
    pub world_capacity: usize,
    /// In the update branch of planning, also replace the stored cost and
    /// next state with the system model's prediction for the new state.
    pub predicted_targets: bool,
}

impl Default for HybridSchedule {
    fn default() -> Self {
        HybridSchedule {
            n_epochs: 50,
            n_direct: 20,
            t_direct: 20,
            n_world: 200,
            n_suggest: 10,
            t_suggest: 5,
            n_plan: 200,
            k: 3,
            force_alpha: None,
            max_epochs: None,
            model_hidden: vec![64, 64],
            model_batch: 32,
            world_capacity: 10_000,
            predicted_targets: false,
        }
    }
}

impl HybridSchedule {
    /// Planning and model learning switched off, `alpha` pinned at 0.
    pub fn direct_only(&self) -> HybridSchedule {
        HybridSchedule { n_world: 0, n_suggest: 0, n_plan: 0, force_alpha: Some(0.0), ..self.clone() }
    }

    pub fn alpha(&self, epoch: u64) -> f64 {
        match self.force_alpha {
            Some(a) => a,
            None => epoch.min(self.n_epochs) as f64 / self.n_epochs as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCounts {
    pub direct: usize,
    pub model: usize,
    pub suggest: usize,
    pub plan: usize,
}

/// Phase session counts for one epoch: `(1 - alpha/2)` of the direct and
/// model constants, `(alpha + 1)/2` of the suggest and plan constants,
/// rounded half up, and at least 1 where the constant is nonzero.
pub fn session_counts(schedule: &HybridSchedule, epoch: u64) -> SessionCounts {
    let at_least_one = |base: usize, v: usize| if base > 0 { v.max(1) } else { 0 };
    match schedule.force_alpha {
        Some(a) => {
            let down = |base: usize| at_least_one(base, ((1.0 - a / 2.0) * base as f64).round() as usize);
            let up = |base: usize| at_least_one(base, ((a + 1.0) / 2.0 * base as f64).round() as usize);
            SessionCounts {
                direct: down(schedule.n_direct),
                model: down(schedule.n_world),
                suggest: up(schedule.n_suggest),
                plan: up(schedule.n_plan),
            }
        }
        None => {
            // exact: alpha = e / n, so base * (2n - e) / 2n and base * (n + e) / 2n
            let n = schedule.n_epochs.max(1);
            let e = epoch.min(n);
            let round = |num: u64, den: u64| ((2 * num + den) / (2 * den)) as usize;
            let down = |base: usize| at_least_one(base, round(base as u64 * (2 * n - e), 2 * n));
            let up = |base: usize| at_least_one(base, round(base as u64 * (n + e), 2 * n));
            SessionCounts {
                direct: down(schedule.n_direct),
                model: down(schedule.n_world),
                suggest: up(schedule.n_suggest),
                plan: up(schedule.n_plan),
            }
        }
    }
}

/// Planning buffer with at most one entry per action.
#[derive(Debug, Clone)]
pub struct PlanBuffer<T> {
    buffer: PrioritizedBuffer<T>,
    slots: [Option<usize>; ACTION_COUNT],
}

impl<T: Real> PlanBuffer<T> {
    pub fn new(alpha: f64, epsilon: f64) -> PlanBuffer<T> {
        PlanBuffer { buffer: PrioritizedBuffer::new(ACTION_COUNT, alpha, epsilon), slots: [None; ACTION_COUNT] }
    }

    pub fn contains(&self, action: usize) -> bool {
        self.slots[action].is_some()
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn get(&self, action: usize) -> Option<&Transition<T>> {
        self.slots[action].and_then(|i| self.buffer.get(i))
    }

    /// Stores a transition for an action not yet present.
    pub fn insert(&mut self, t: Transition<T>) -> Result<(), AgentError> {
        if self.contains(t.action) {
            return Err(AgentError::Config(format!("action {} already planned", t.action)));
        }
        let a = t.action;
        self.slots[a] = Some(self.buffer.push(t));
        Ok(())
    }

    /// Replaces the current-state field of the entry for `action`.
    pub fn rewrite_state(&mut self, action: usize, state: Vec<T>) {
        if let Some(t) = self.slots[action].and_then(|i| self.buffer.get_mut(i)) {
            t.state = state;
        }
    }

    /// Replaces the whole entry for `action`.
    pub fn rewrite(&mut self, action: usize, state: Vec<T>, cost: T, next_state: Vec<T>) {
        if let Some(t) = self.slots[action].and_then(|i| self.buffer.get_mut(i)) {
            t.state = state;
            t.cost = cost;
            t.next_state = next_state;
        }
    }

    pub fn buffer_mut(&mut self) -> &mut PrioritizedBuffer<T> {
        &mut self.buffer
    }
}

/// The hybrid agent: a Q-network trained from real and planned experience
/// plus a learned system model.
#[derive(Debug, Clone)]
pub struct HybridAgent<T> {
    pub dqn: DqnAgent<T>,
    pub model: SystemModel<T>,
    pub world: UniformBuffer<T>,
    pub plan: PlanBuffer<T>,
    pub schedule: HybridSchedule,
    model_rng: ChaCha8Rng,
    epoch: u64,
}

impl<T: Real> HybridAgent<T> {
    /// The Q-network draws from the same stream a [`DqnAgent`] with this seed
    /// would; the system model uses a separate one.
    pub fn new(
        config: DqnConfig,
        schedule: HybridSchedule,
        layout: ObservationLayout,
        seed: u64,
    ) -> Result<HybridAgent<T>, AgentError> {
        if !(1..=ACTION_COUNT).contains(&schedule.k) {
            return Err(AgentError::Config(format!("K must be in [1, {ACTION_COUNT}]")));
        }
        if schedule.n_epochs == 0 {
            return Err(AgentError::Config("n_epochs must be positive".into()));
        }
        let mut model_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let adam = config.adam;
        let (alpha, eps) = (config.per_alpha, config.per_epsilon);
        let dqn = DqnAgent::new(config, layout, seed)?;
        let model = SystemModel::new(layout, &schedule.model_hidden, adam, schedule.model_batch, &mut model_rng)?;
        Ok(HybridAgent {
            dqn,
            model,
            world: UniformBuffer::new(schedule.world_capacity),
            plan: PlanBuffer::new(alpha, eps),
            schedule,
            model_rng,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn checkpoint(&self) -> (String, String) {
        (self.dqn.checkpoint(), self.model.checkpoint())
    }

    pub fn restore(&mut self, q: &str, model: &str) -> Result<(), AgentError> {
        self.dqn.restore(q)?;
        self.model.restore(model)
    }
}

impl<T: Real> Policy for HybridAgent<T> {
    fn greedy_action(&self, observation: &Observation) -> Result<usize, AgentError> {
        self.dqn.greedy_action(observation)
    }
}

/// `t_suggest` imagined steps from the real environment's current state.
/// At each imagined state the `k` best predicted actions are checked against
/// the plan buffer: a new action is tried for real from the environment's
/// actual state, a known one has its entry moved to the imagined state.
/// Returns `true` if the monitor asked to stop.
pub fn planning_session<T: Real, E: TrainingEnv>(
    agent: &mut HybridAgent<T>,
    env: &mut E,
    constraint: AccuracyConstraint,
    monitor: &mut dyn Monitor,
    log: &mut TrainingLog,
) -> Result<bool, AgentError> {
    let epoch = agent.epoch;
    let mut s: Vec<T> = env.observation()?.features();
    for _ in 0..agent.schedule.t_suggest {
        let costs = agent.model.predict_costs(&s)?;
        let best = argmin(&costs);
        let (_, imagined) = agent.model.predict(&s, best)?;
        for a in suggest_actions(&agent.model, &s, agent.schedule.k)? {
            if !agent.plan.contains(a) {
                let state: Vec<T> = env.observation()?.features();
                let out = env.step(action(a)?, constraint)?;
                agent.plan.insert(Transition {
                    state,
                    action: a,
                    cost: T::of(out.reward * agent.dqn.config.cost_scale),
                    next_state: out.next_observation.features(),
                })?;
                agent.dqn.note_real_step();
                log.real_step(epoch, Phase::Planning, out.reward, out.response_time.micros(), None);
                if monitor.after_real_step(log.real_env_steps, agent)? {
                    return Ok(true);
                }
            } else if agent.schedule.predicted_targets {
                let (cost, next) = agent.model.predict(&s, a)?;
                agent.plan.rewrite(a, s.clone(), cost, next);
            } else {
                agent.plan.rewrite_state(a, s.clone());
            }
        }
        s = imagined;
    }
    Ok(false)
}

/// Runs epochs of direct learning, model learning and planning until the
/// step budget, `max_epochs`, or the monitor stops it. `alpha` is capped at
/// 1 once the epoch count passes `n_epochs`.
pub fn hybrid_train<T: Real, E: TrainingEnv>(
    agent: &mut HybridAgent<T>,
    env: &mut E,
    constraint: AccuracyConstraint,
    max_real_steps: u64,
    monitor: &mut dyn Monitor,
    log: &mut TrainingLog,
) -> Result<(), AgentError> {
    let mut bounded = Bounded { inner: monitor, max_real_steps };
    while log.real_env_steps < max_real_steps {
        if agent.schedule.max_epochs.is_some_and(|m| agent.epoch >= m) {
            break;
        }
        agent.epoch += 1;
        let epoch = agent.epoch;
        log.epochs = epoch;
        let counts = session_counts(&agent.schedule, epoch);

        for _ in 0..counts.direct {
            let t = agent.schedule.t_direct;
            if direct_rl_session(&mut agent.dqn, Some(&mut agent.world), env, constraint, t, epoch, &mut bounded, log)? {
                return Ok(());
            }
        }
        agent.dqn.sync_target();

        for _ in 0..counts.model {
            match agent.model.train_step(&agent.world, &mut agent.model_rng)? {
                Some(loss) => log.update(epoch, Phase::Model, loss.to_f64()),
                None => log.skipped_model_sessions += 1,
            }
        }

        for _ in 0..counts.suggest {
            if planning_session(agent, env, constraint, &mut bounded, log)? {
                return Ok(());
            }
        }
        for _ in 0..counts.plan {
            if let Some(loss) = agent.dqn.train_on(agent.plan.buffer_mut())? {
                log.update(epoch, Phase::Planning, loss.to_f64());
            }
        }
        agent.dqn.sync_target();
    }
    Ok(())
}
