use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use super::action::{OrchestrationAction, Target};
use super::env::ResourceState;
use super::topology::Tier;
use crate::catalog::{Catalog, ModelId, Precision, MODEL_COUNT};

/// Simulated time with microsecond resolution.
///
/// Integer arithmetic keeps link-delay additivity and window means exact.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct SimDuration(u64);

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_micros(us: u64) -> SimDuration {
        SimDuration(us)
    }

    /// Rounds to the nearest microsecond; negative input clamps to zero.
    pub fn from_ms(ms: f64) -> SimDuration {
        SimDuration((ms * 1000.0).round().max(0.0) as u64)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl AddAssign for SimDuration {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    fn sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 - rhs.0)
    }
}

impl Sum for SimDuration {
    fn sum<I: Iterator<Item = SimDuration>>(iter: I) -> SimDuration {
        SimDuration(iter.map(|d| d.0).sum())
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ms", self.as_ms())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub cpu_count: u32,
    /// Million MACs per millisecond per core for FP32 models.
    pub throughput_fp32: f64,
    /// Int8 throughput as a multiple of FP32 throughput.
    pub int8_speedup: f64,
    pub mem_capacity: u64,
}

impl NodeSpec {
    pub fn throughput(&self, precision: Precision) -> f64 {
        match precision {
            Precision::Fp32 => self.throughput_fp32,
            Precision::Int8 => self.throughput_fp32 * self.int8_speedup,
        }
    }
}

/// Static simulator parameters. Every field is overridable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub end: NodeSpec,
    pub edge: NodeSpec,
    pub cloud: NodeSpec,
    /// Latency of an idle end device running the smallest Int8 model locally.
    pub anchor_ms: f64,
    /// Input transmission time per hop.
    pub payload_ms: f64,
    /// Added to every traversal of a weak link, in each direction.
    pub weak_delay_ms: f64,
    /// Added to the cost when the window accuracy misses the constraint.
    pub penalty_ms: f64,
    /// A node reports memory Busy above this fraction of its capacity.
    pub mem_busy_fraction: f64,
    /// Append the requesting device's index to the observation.
    pub requester_index: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            end: NodeSpec { cpu_count: 1, throughput_fp32: 0.57, int8_speedup: 1.6, mem_capacity: 4_000 },
            edge: NodeSpec { cpu_count: 2, throughput_fp32: 2.85, int8_speedup: 1.6, mem_capacity: 8_000 },
            cloud: NodeSpec { cpu_count: 4, throughput_fp32: 5.70, int8_speedup: 1.6, mem_capacity: 16_000 },
            anchor_ms: 72.0,
            payload_ms: 10.0,
            weak_delay_ms: 20.0,
            penalty_ms: 1000.0,
            mem_busy_fraction: 0.5,
            requester_index: false,
        }
    }
}

impl SimConfig {
    pub fn node(&self, tier: Tier) -> &NodeSpec {
        match tier {
            Tier::End => &self.end,
            Tier::Edge => &self.edge,
            Tier::Cloud => &self.cloud,
        }
    }
}

/// Per-component latency of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LatencyBreakdown {
    pub queue: SimDuration,
    pub compute: SimDuration,
    pub network: SimDuration,
}

impl LatencyBreakdown {
    pub fn total(&self) -> SimDuration {
        self.queue + self.compute + self.network
    }
}

/// Response-time function with compute times precomputed per (tier, model).
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    compute: [[SimDuration; MODEL_COUNT]; 3],
    cpu_count: [u64; 3],
    payload: SimDuration,
    weak_delay: SimDuration,
    scale: f64,
}

fn tier_slot(tier: Tier) -> usize {
    match tier {
        Tier::End => 0,
        Tier::Edge => 1,
        Tier::Cloud => 2,
    }
}

impl LatencyModel {
    /// Calibrates the compute scale so that the cheapest model on an idle end
    /// device takes exactly `anchor_ms`.
    pub fn new(config: &SimConfig, catalog: &Catalog) -> LatencyModel {
        let raw = |tier: Tier, id: ModelId| {
            let m = catalog.get(id);
            m.macs as f64 / config.node(tier).throughput(m.precision)
        };
        let cheapest = ModelId::all()
            .min_by(|&a, &b| raw(Tier::End, a).total_cmp(&raw(Tier::End, b)))
            .unwrap_or(ModelId::D0);
        let scale = config.anchor_ms / raw(Tier::End, cheapest);
        let mut compute = [[SimDuration::ZERO; MODEL_COUNT]; 3];
        for tier in [Tier::End, Tier::Edge, Tier::Cloud] {
            for id in ModelId::all() {
                compute[tier_slot(tier)][id.index()] = SimDuration::from_ms(raw(tier, id) * scale);
            }
        }
        LatencyModel {
            compute,
            cpu_count: [config.end.cpu_count as u64, config.edge.cpu_count as u64, config.cloud.cpu_count as u64],
            payload: SimDuration::from_ms(config.payload_ms),
            weak_delay: SimDuration::from_ms(config.weak_delay_ms),
            scale,
        }
    }

    /// Multiplier applied to `macs / throughput`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn compute(&self, tier: Tier, model: ModelId) -> SimDuration {
        self.compute[tier_slot(tier)][model.index()]
    }

    /// Processor-sharing approximation: `active / cores` head-of-line jobs ahead.
    pub fn queue_wait(&self, tier: Tier, active_jobs: usize, head_compute: SimDuration) -> SimDuration {
        let cores = self.cpu_count[tier_slot(tier)].max(1);
        let num = active_jobs as u64 * head_compute.micros();
        SimDuration::from_micros((2 * num + cores) / (2 * cores))
    }

    pub fn network(&self, action: OrchestrationAction, state: &ResourceState) -> SimDuration {
        let delay = |weak: bool| if weak { self.weak_delay } else { SimDuration::ZERO };
        let device_hop = || {
            let weak = state.topology.device_links[state.round_index].is_weak();
            self.payload + delay(weak) + delay(weak)
        };
        match action.target {
            Target::Local => SimDuration::ZERO,
            Target::Edge => device_hop(),
            Target::Cloud => {
                let weak = state.topology.edge_link.is_weak();
                device_hop() + self.payload + delay(weak) + delay(weak)
            }
        }
    }

    pub fn breakdown(&self, action: OrchestrationAction, state: &ResourceState) -> LatencyBreakdown {
        let tier = action.target.tier();
        let load = state.load(action.target);
        LatencyBreakdown {
            queue: self.queue_wait(tier, load.active_jobs, load.head_compute),
            compute: self.compute(tier, action.model),
            network: self.network(action, state),
        }
    }

    /// Latency of a request from device `state.round_index`.
    pub fn response_time(&self, action: OrchestrationAction, state: &ResourceState) -> SimDuration {
        self.breakdown(action, state).total()
    }
}
