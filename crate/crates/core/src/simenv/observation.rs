use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Number of discrete CPU levels reported for the edge and the cloud.
pub const CPU_LEVELS: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceObs {
    pub cpu_busy: bool,
    pub mem_busy: bool,
    pub link_weak: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServerObs {
    /// `0..=8`.
    pub cpu_level: u8,
    pub mem_busy: bool,
    pub link_weak: bool,
}

/// Discretized system state seen by the agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub devices: Vec<DeviceObs>,
    pub edge: ServerObs,
    pub cloud: ServerObs,
    pub requester: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Binary,
    Level,
    OneHot { width: usize },
}

/// Shape of the numeric feature vector for a given device count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub n_devices: usize,
    pub requester_index: bool,
}

impl ObservationLayout {
    pub fn new(n_devices: usize, requester_index: bool) -> ObservationLayout {
        ObservationLayout { n_devices, requester_index }
    }

    /// `3` per device, `3` each for edge and cloud, plus a one-hot requester.
    pub fn len(&self) -> usize {
        3 * self.n_devices + 6 + if self.requester_index { self.n_devices } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn components(&self) -> Vec<Component> {
        let mut out = vec![Component::Binary; 3 * self.n_devices];
        for _ in 0..2 {
            out.extend([Component::Level, Component::Binary, Component::Binary]);
        }
        if self.requester_index {
            out.push(Component::OneHot { width: self.n_devices });
        }
        out
    }

    /// Number of distinct observations.
    pub fn state_count(&self) -> u128 {
        let per_server = CPU_LEVELS as u128 * 2 * 2;
        let devices = 8u128.pow(self.n_devices as u32);
        let requester = if self.requester_index { self.n_devices as u128 } else { 1 };
        devices * per_server * per_server * requester
    }

    /// Rounds every component of `features` to its nearest legal value.
    pub fn snap<T: Float>(&self, features: &mut [T]) {
        let half = T::from(0.5).unwrap();
        let eight = T::from(8.0).unwrap();
        let mut i = 0;
        for c in self.components() {
            match c {
                Component::Binary => {
                    features[i] = if features[i] >= half { T::one() } else { T::zero() };
                    i += 1;
                }
                Component::Level => {
                    let k = (features[i] * eight).round().max(T::zero()).min(eight);
                    features[i] = k / eight;
                    i += 1;
                }
                Component::OneHot { width } => {
                    let slot = &mut features[i..i + width];
                    let best = argmax(slot);
                    for (j, v) in slot.iter_mut().enumerate() {
                        *v = if j == best { T::one() } else { T::zero() };
                    }
                    i += width;
                }
            }
        }
    }

    /// Inverse of [`Observation::features`] for snapped vectors.
    pub fn decode<T: Float>(&self, features: &[T]) -> Option<Observation> {
        if features.len() != self.len() {
            return None;
        }
        let bit = |v: T| v >= T::from(0.5).unwrap();
        let level = |v: T| (v * T::from(8.0).unwrap()).round().to_u8().map(|k| k.min(8));
        let devices = (0..self.n_devices)
            .map(|d| DeviceObs {
                cpu_busy: bit(features[3 * d]),
                mem_busy: bit(features[3 * d + 1]),
                link_weak: bit(features[3 * d + 2]),
            })
            .collect();
        let base = 3 * self.n_devices;
        let server = |o: usize| -> Option<ServerObs> {
            Some(ServerObs {
                cpu_level: level(features[base + o])?,
                mem_busy: bit(features[base + o + 1]),
                link_weak: bit(features[base + o + 2]),
            })
        };
        let requester = self
            .requester_index
            .then(|| argmax(&features[base + 6..]) as u8);
        Some(Observation { devices, edge: server(0)?, cloud: server(3)?, requester })
    }
}

fn argmax<T: Float>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

fn flag<T: Float>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

impl Observation {
    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout::new(self.devices.len(), self.requester.is_some())
    }

    /// Numeric encoding in `[0, 1]`: binaries as `0/1`, CPU levels as `k/8`.
    pub fn features<T: Float>(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.layout().len());
        self.write_features(&mut out);
        out
    }

    pub fn write_features<T: Float>(&self, out: &mut Vec<T>) {
        for d in &self.devices {
            out.extend([flag::<T>(d.cpu_busy), flag(d.mem_busy), flag(d.link_weak)]);
        }
        let eight = T::from(8.0).unwrap();
        for s in [&self.edge, &self.cloud] {
            out.extend([T::from(s.cpu_level).unwrap() / eight, flag::<T>(s.mem_busy), flag(s.link_weak)]);
        }
        if let Some(r) = self.requester {
            out.extend((0..self.devices.len()).map(|i| flag::<T>(i == r as usize)));
        }
    }
}
