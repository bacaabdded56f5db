use rand::Rng;

use super::{argsort, AgentError};
use crate::approx::{AdamConfig, AdamState, Mlp, Sample, Supervision, UniformBuffer};
use crate::scalar::Real;
use crate::simenv::{ObservationLayout, ACTION_COUNT};

/// Learned predictor of `(cost, next observation)` for a state-action pair.
///
/// Input is the observation encoding followed by a one-hot action; output 0
/// is the scaled cost and the rest is the next observation encoding.
#[derive(Debug, Clone)]
pub struct SystemModel<T> {
    layout: ObservationLayout,
    net: Mlp<T>,
    adam: AdamState<T>,
    batch: usize,
}

impl<T: Real> SystemModel<T> {
    /// The output layer starts at zero, so every prediction is initially 0.
    pub fn new<R: Rng + ?Sized>(
        layout: ObservationLayout,
        hidden: &[usize],
        adam: AdamConfig,
        batch: usize,
        rng: &mut R,
    ) -> Result<SystemModel<T>, AgentError> {
        let mut sizes = vec![layout.len() + ACTION_COUNT];
        sizes.extend(hidden);
        sizes.push(1 + layout.len());
        let net = Mlp::new(&sizes, rng)?.zero_output_layer();
        let adam = AdamState::new(&net, adam);
        Ok(SystemModel { layout, net, adam, batch })
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn layout(&self) -> ObservationLayout {
        self.layout
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    fn input(&self, state: &[T], action: usize) -> Vec<T> {
        let mut x = Vec::with_capacity(state.len() + ACTION_COUNT);
        x.extend_from_slice(state);
        x.extend((0..ACTION_COUNT).map(|i| if i == action { T::one() } else { T::zero() }));
        x
    }

    /// Raw network output: scaled cost and unsnapped next-state encoding.
    pub fn predict_raw(&self, state: &[T], action: usize) -> Result<(T, Vec<T>), AgentError> {
        let mut out = self.net.forward(&self.input(state, action))?;
        let cost = out.remove(0);
        Ok((cost, out))
    }

    /// Scaled cost and next state snapped to legal observation levels.
    pub fn predict(&self, state: &[T], action: usize) -> Result<(T, Vec<T>), AgentError> {
        let (cost, mut next) = self.predict_raw(state, action)?;
        self.layout.snap(&mut next);
        Ok((cost, next))
    }

    /// Predicted cost of every action in `state`.
    pub fn predict_costs(&self, state: &[T]) -> Result<Vec<T>, AgentError> {
        (0..ACTION_COUNT).map(|a| Ok(self.predict_raw(state, a)?.0)).collect()
    }

    /// One uniform minibatch and one Adam step. `None` when the buffer is
    /// still smaller than the minibatch.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        world: &UniformBuffer<T>,
        rng: &mut R,
    ) -> Result<Option<T>, AgentError> {
        if world.len() < self.batch {
            return Ok(None);
        }
        let batch = world.sample(self.batch, rng)?;
        let inputs: Vec<Vec<T>> = batch.iter().map(|t| self.input(&t.state, t.action)).collect();
        let targets: Vec<Vec<T>> = batch
            .iter()
            .map(|t| std::iter::once(t.cost).chain(t.next_state.iter().copied()).collect())
            .collect();
        let samples: Vec<Sample<'_, T>> = inputs
            .iter()
            .zip(&targets)
            .map(|(x, y)| Sample { input: x, target: Supervision::All(y), weight: T::one() })
            .collect();
        let (grads, loss) = self.net.backward(&samples)?;
        self.adam.update(&mut self.net, &grads)?;
        Ok(Some(loss))
    }

    pub fn checkpoint(&self) -> String {
        self.net.to_text()
    }

    pub fn restore(&mut self, text: &str) -> Result<(), AgentError> {
        let net = Mlp::from_text(text)?;
        if net.sizes() != self.net.sizes() {
            return Err(AgentError::Config("checkpoint shape does not match the system model".into()));
        }
        self.adam = AdamState::new(&net, self.adam.config);
        self.net = net;
        Ok(())
    }
}

/// Runs `sessions` model updates and returns the loss of each one that ran.
pub fn train_system_model<T: Real, R: Rng + ?Sized>(
    model: &mut SystemModel<T>,
    world: &UniformBuffer<T>,
    sessions: usize,
    rng: &mut R,
) -> Result<Vec<Option<T>>, AgentError> {
    (0..sessions).map(|_| model.train_step(world, rng)).collect()
}

/// The `k` actions with the lowest predicted cost, ascending, ties by index.
pub fn suggest_actions<T: Real>(model: &SystemModel<T>, state: &[T], k: usize) -> Result<Vec<usize>, AgentError> {
    if !(1..=ACTION_COUNT).contains(&k) {
        return Err(AgentError::Config(format!("K must be in [1, {ACTION_COUNT}], got {k}")));
    }
    let mut order = argsort(&model.predict_costs(state)?);
    order.truncate(k);
    Ok(order)
}
