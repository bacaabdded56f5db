use rand::seq::index;
use rand::Rng;

use super::ApproxError;
use crate::scalar::Real;

/// One experience tuple with numerically encoded states.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: usize,
    pub cost: T,
    pub next_state: Vec<T>,
}

/// Binary sum tree over leaf weights for proportional sampling.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> SumTree {
        let leaves = capacity.next_power_of_two();
        SumTree { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut pos = i + self.leaves;
        self.nodes[pos] = value;
        while pos > 1 {
            pos /= 2;
            self.nodes[pos] = self.nodes[2 * pos] + self.nodes[2 * pos + 1];
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[i + self.leaves]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative range contains `u` (`0 <= u < total`).
    fn find(&self, mut u: f64, len: usize) -> usize {
        let mut pos = 1;
        while pos < self.leaves {
            let left = self.nodes[2 * pos];
            if u < left {
                pos *= 2;
            } else {
                u -= left;
                pos = 2 * pos + 1;
            }
        }
        // rounding can walk past the last filled slot
        (pos - self.leaves).min(len - 1)
    }
}

/// A prioritized minibatch: slot indices and normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedSample<T> {
    pub indices: Vec<usize>,
    pub weights: Vec<T>,
}

/// Ring buffer sampled with probability `p_i^alpha / sum_j p_j^alpha`.
///
/// New transitions enter at the largest priority seen so far.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer<T> {
    capacity: usize,
    items: Vec<Transition<T>>,
    priorities: Vec<f64>,
    tree: SumTree,
    next: usize,
    alpha: f64,
    epsilon: f64,
    max_priority: f64,
}

impl<T: Real> PrioritizedBuffer<T> {
    pub fn new(capacity: usize, alpha: f64, epsilon: f64) -> PrioritizedBuffer<T> {
        assert!(capacity > 0, "buffer capacity must be positive");
        PrioritizedBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            priorities: Vec::new(),
            tree: SumTree::new(capacity),
            next: 0,
            alpha,
            epsilon,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition<T>> {
        self.items.get(i)
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut Transition<T>> {
        self.items.get_mut(i)
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    /// Iterates in slot order.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.items.iter()
    }

    /// Stores `t`, evicting the oldest entry when full. Returns its slot.
    pub fn push(&mut self, t: Transition<T>) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
            self.priorities.push(self.max_priority);
        } else {
            self.items[slot] = t;
            self.priorities[slot] = self.max_priority;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (slot + 1) % self.capacity;
        slot
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Draws `batch` slots with replacement. Importance weights are
    /// `(N * P(i))^-beta`, scaled so the largest in the batch is 1.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<PrioritizedSample<T>, ApproxError> {
        if batch == 0 || self.items.len() < batch {
            return Err(ApproxError::Undersized { len: self.items.len(), batch });
        }
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut raw = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.tree.find(rng.gen::<f64>() * total, self.items.len());
            indices.push(i);
            raw.push((n * self.tree.get(i) / total).powf(-beta));
        }
        let max = raw.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        let weights = raw.into_iter().map(|w| T::of(w / max)).collect();
        Ok(PrioritizedSample { indices, weights })
    }

    /// Sets `p_i = |td_i| + epsilon` for each sampled slot.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[T]) {
        for (&i, &td) in indices.iter().zip(td_errors) {
            let p = td.abs().to_f64().unwrap_or(f64::MAX) + self.epsilon;
            self.priorities[i] = p;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }
}

/// Ring buffer sampled uniformly without replacement within a minibatch.
#[derive(Debug, Clone)]
pub struct UniformBuffer<T> {
    capacity: usize,
    items: Vec<Transition<T>>,
    next: usize,
}

impl<T: Real> UniformBuffer<T> {
    pub fn new(capacity: usize) -> UniformBuffer<T> {
        assert!(capacity > 0, "buffer capacity must be positive");
        UniformBuffer { capacity, items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition<T>> {
        self.items.get(i)
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        let (newer, older) = self.items.split_at(if self.items.len() < self.capacity { 0 } else { self.next });
        older.iter().chain(newer.iter())
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition<T>>, ApproxError> {
        if batch == 0 || self.items.len() < batch {
            return Err(ApproxError::Undersized { len: self.items.len(), batch });
        }
        Ok(index::sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }
}
