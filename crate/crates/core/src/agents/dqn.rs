use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainingEnv, action, argmin, select_action, AgentError, Anneal, Monitor, Phase, Policy, TrainingLog};
use crate::approx::{AdamConfig, AdamState, Mlp, PrioritizedBuffer, Sample, Supervision, Transition, UniformBuffer};
use crate::catalog::AccuracyConstraint;
use crate::scalar::Real;
use crate::simenv::{Observation, ObservationLayout, ACTION_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub batch: usize,
    /// Minimum transitions in the direct buffer before updates start.
    pub warmup: usize,
    pub capacity: usize,
    pub adam: AdamConfig,
    pub per_alpha: f64,
    pub per_epsilon: f64,
    pub beta: Anneal,
    pub epsilon: Anneal,
    /// Multiplies the ms cost before it is stored.
    pub cost_scale: f64,
    /// Steps per direct session.
    pub session_len: usize,
    /// Direct sessions between target syncs in the baseline loop.
    pub sessions_per_sync: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![64, 64],
            gamma: 0.9,
            batch: 32,
            warmup: 32,
            capacity: 10_000,
            adam: AdamConfig::default(),
            per_alpha: 0.6,
            per_epsilon: 1e-3,
            beta: Anneal { start: 0.4, end: 1.0, steps: 20_000 },
            epsilon: Anneal { start: 1.0, end: 0.05, steps: 5_000 },
            cost_scale: 1e-3,
            session_len: 20,
            sessions_per_sync: 20,
        }
    }
}

/// Q-network with a target copy, Adam state and a prioritized buffer.
#[derive(Debug, Clone)]
pub struct DqnAgent<T> {
    pub config: DqnConfig,
    layout: ObservationLayout,
    online: Mlp<T>,
    target: Mlp<T>,
    adam: AdamState<T>,
    direct: PrioritizedBuffer<T>,
    rng: ChaCha8Rng,
    real_steps: u64,
}

impl<T: Real> DqnAgent<T> {
    /// The output layer starts at zero, so an untrained agent picks action 0.
    pub fn new(config: DqnConfig, layout: ObservationLayout, seed: u64) -> Result<DqnAgent<T>, AgentError> {
        if config.batch == 0 || config.warmup < config.batch {
            return Err(AgentError::Config("warmup must be at least the minibatch size".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![layout.len()];
        sizes.extend(&config.hidden);
        sizes.push(ACTION_COUNT);
        let online = Mlp::new(&sizes, &mut rng)?.zero_output_layer();
        let adam = AdamState::new(&online, config.adam);
        Ok(DqnAgent {
            target: online.clone(),
            online,
            adam,
            direct: PrioritizedBuffer::new(config.capacity, config.per_alpha, config.per_epsilon),
            layout,
            rng,
            real_steps: 0,
            config,
        })
    }

    pub fn layout(&self) -> ObservationLayout {
        self.layout
    }

    pub fn online(&self) -> &Mlp<T> {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp<T> {
        &mut self.online
    }

    pub fn target(&self) -> &Mlp<T> {
        &self.target
    }

    pub fn direct_buffer(&self) -> &PrioritizedBuffer<T> {
        &self.direct
    }

    pub fn real_steps(&self) -> u64 {
        self.real_steps
    }

    /// Counts a real step taken outside a direct session.
    pub fn note_real_step(&mut self) {
        self.real_steps += 1;
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.timestep()
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    pub fn q_values(&self, features: &[T]) -> Result<Vec<T>, AgentError> {
        Ok(self.online.forward(features)?)
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.real_steps)
    }

    /// `c + gamma * min_a' Q'(s', a')`, from the target network only.
    pub fn td_target(&self, t: &Transition<T>) -> Result<T, AgentError> {
        td_target(&self.target, self.config.gamma, t)
    }

    /// One prioritized minibatch from the direct buffer and one Adam step.
    pub fn train_direct(&mut self) -> Result<Option<T>, AgentError> {
        let beta = self.config.beta.value(self.real_steps);
        fit(
            &mut self.online,
            &self.target,
            &mut self.adam,
            &mut self.rng,
            (self.config.gamma, self.config.batch, beta),
            &mut self.direct,
        )
    }

    /// Same as [`DqnAgent::train_direct`] on another buffer. The minibatch
    /// shrinks to the buffer size when the buffer is smaller.
    pub fn train_on(&mut self, buf: &mut PrioritizedBuffer<T>) -> Result<Option<T>, AgentError> {
        let beta = self.config.beta.value(self.real_steps);
        fit(&mut self.online, &self.target, &mut self.adam, &mut self.rng, (self.config.gamma, self.config.batch, beta), buf)
    }

    /// Parameters of the online network in the snapshot text format.
    pub fn checkpoint(&self) -> String {
        self.online.to_text()
    }

    /// Loads online parameters and syncs the target copy.
    pub fn restore(&mut self, text: &str) -> Result<(), AgentError> {
        let net = Mlp::from_text(text)?;
        if net.sizes() != self.online.sizes() {
            return Err(AgentError::Config("checkpoint shape does not match the agent".into()));
        }
        self.online = net;
        self.adam = AdamState::new(&self.online, self.config.adam);
        self.sync_target();
        Ok(())
    }
}

fn td_target<T: Real>(target: &Mlp<T>, gamma: f64, t: &Transition<T>) -> Result<T, AgentError> {
    let next = target.forward(&t.next_state)?;
    let min = next.iter().cloned().fold(T::infinity(), T::min);
    Ok(t.cost + T::of(gamma) * min)
}

fn fit<T: Real>(
    online: &mut Mlp<T>,
    target: &Mlp<T>,
    adam: &mut AdamState<T>,
    rng: &mut ChaCha8Rng,
    (gamma, batch, beta): (f64, usize, f64),
    buf: &mut PrioritizedBuffer<T>,
) -> Result<Option<T>, AgentError> {
    let batch = batch.min(buf.len());
    if batch == 0 {
        return Ok(None);
    }
    let sample = buf.sample(batch, beta, rng)?;
    let mut targets = Vec::with_capacity(batch);
    for &i in &sample.indices {
        targets.push(td_target(target, gamma, buf.get(i).expect("sampled slot exists"))?);
    }
    let samples: Vec<Sample<'_, T>> = sample
        .indices
        .iter()
        .zip(&targets)
        .zip(&sample.weights)
        .map(|((&i, &y), &w)| {
            let t = buf.get(i).expect("sampled slot exists");
            Sample { input: &t.state, target: Supervision::One { index: t.action, value: y }, weight: w }
        })
        .collect();
    let (grads, loss, outputs) = online.backward_with_outputs(&samples)?;
    let tds: Vec<T> = samples
        .iter()
        .zip(&outputs)
        .map(|(s, q)| match s.target {
            Supervision::One { index, value } => q[index] - value,
            Supervision::All(_) => unreachable!("value targets supervise one action"),
        })
        .collect();
    drop(samples);
    adam.update(online, &grads)?;
    buf.update_priorities(&sample.indices, &tds);
    Ok(Some(loss))
}

impl<T: Real> Policy for DqnAgent<T> {
    fn greedy_action(&self, observation: &Observation) -> Result<usize, AgentError> {
        Ok(argmin(&self.q_values(&observation.features::<T>())?))
    }
}

/// `t_direct` epsilon-greedy real steps. Each transition goes to the direct
/// buffer and, when given, the world buffer; one update per step once the
/// direct buffer holds `warmup` transitions. Returns `true` if the monitor
/// asked to stop.
#[allow(clippy::too_many_arguments)]
pub fn direct_rl_session<T: Real, E: TrainingEnv>(
    agent: &mut DqnAgent<T>,
    mut world: Option<&mut UniformBuffer<T>>,
    env: &mut E,
    constraint: AccuracyConstraint,
    t_direct: usize,
    epoch: u64,
    monitor: &mut dyn Monitor,
    log: &mut TrainingLog,
) -> Result<bool, AgentError> {
    for _ in 0..t_direct {
        let state: Vec<T> = env.observation()?.features();
        let q = agent.q_values(&state)?;
        let a = select_action(&q, agent.epsilon(), &mut agent.rng);
        let out = env.step(action(a)?, constraint)?;
        let t = Transition {
            state,
            action: a,
            cost: T::of(out.reward * agent.config.cost_scale),
            next_state: out.next_observation.features(),
        };
        if let Some(w) = world.as_deref_mut() {
            w.push(t.clone());
        }
        agent.direct.push(t);
        agent.real_steps += 1;
        let loss = if agent.direct.len() >= agent.config.warmup { agent.train_direct()? } else { None };
        log.real_step(epoch, Phase::Direct, out.reward, out.response_time.micros(), loss.and_then(|l| l.to_f64()));
        if loss.is_some() {
            log.policy_updates += 1;
        }
        if monitor.after_real_step(log.real_env_steps, agent)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The model-free baseline: direct sessions with a target sync every
/// `sessions_per_sync` sessions, until `max_real_steps` or the monitor stops.
pub fn dqn_train<T: Real, E: TrainingEnv>(
    agent: &mut DqnAgent<T>,
    env: &mut E,
    constraint: AccuracyConstraint,
    max_real_steps: u64,
    monitor: &mut dyn Monitor,
    log: &mut TrainingLog,
) -> Result<(), AgentError> {
    let mut bounded = super::Bounded { inner: monitor, max_real_steps };
    let mut epoch = 0;
    while log.real_env_steps < max_real_steps {
        epoch += 1;
        log.epochs = epoch;
        for _ in 0..agent.config.sessions_per_sync {
            let len = agent.config.session_len;
            if direct_rl_session(agent, None, env, constraint, len, epoch, &mut bounded, log)? {
                return Ok(());
            }
        }
        agent.sync_target();
    }
    Ok(())
}
