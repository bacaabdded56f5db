use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::action::{OrchestrationAction, Target};
use super::latency::{LatencyModel, SimConfig, SimDuration};
use super::observation::{DeviceObs, Observation, ObservationLayout, ServerObs, CPU_LEVELS};
use super::topology::{Tier, Topology};
use super::EnvError;
use crate::catalog::{Accuracy, AccuracyConstraint, Catalog};

/// Instantaneous load of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeLoad {
    /// Jobs executing or queued.
    pub active_jobs: usize,
    pub resident_mem: u64,
    /// Compute time of the oldest active job, zero when idle.
    pub head_compute: SimDuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceState {
    pub devices: Vec<NodeLoad>,
    pub edge: NodeLoad,
    pub cloud: NodeLoad,
    pub topology: Topology,
    /// Device issuing the next request.
    pub round_index: usize,
}

impl ResourceState {
    pub fn idle(topology: Topology) -> ResourceState {
        ResourceState {
            devices: vec![NodeLoad::default(); topology.n_devices()],
            edge: NodeLoad::default(),
            cloud: NodeLoad::default(),
            topology,
            round_index: 0,
        }
    }

    /// Load of the node a request from the current device would land on.
    pub fn load(&self, target: Target) -> &NodeLoad {
        match target {
            Target::Local => &self.devices[self.round_index],
            Target::Edge => &self.edge,
            Target::Cloud => &self.cloud,
        }
    }
}

/// Cost signal: the window mean response time, plus `penalty_ms` when the
/// window mean accuracy is below the constraint. Agents minimize it.
pub fn reward(window_art: f64, window_aa: f64, constraint: AccuracyConstraint, penalty_ms: f64) -> f64 {
    if constraint.admits(window_aa) {
        window_art
    } else {
        window_art + penalty_ms
    }
}

/// Maps a resource snapshot to the discrete observation.
///
/// CPU of an end device is Busy with any active job; edge and cloud report
/// their active job count saturated at level 8. Memory is Busy above the
/// configured fraction of capacity.
pub fn encode_state(state: &ResourceState, config: &SimConfig) -> Observation {
    let mem_busy = |load: &NodeLoad, tier: Tier| {
        load.resident_mem as f64 > config.mem_busy_fraction * config.node(tier).mem_capacity as f64
    };
    let devices = state
        .devices
        .iter()
        .zip(&state.topology.device_links)
        .map(|(load, link)| DeviceObs {
            cpu_busy: load.active_jobs >= 1,
            mem_busy: mem_busy(load, Tier::End),
            link_weak: link.is_weak(),
        })
        .collect();
    let server = |load: &NodeLoad, tier: Tier| ServerObs {
        cpu_level: load.active_jobs.min(CPU_LEVELS as usize - 1) as u8,
        mem_busy: mem_busy(load, tier),
        link_weak: state.topology.edge_link.is_weak(),
    };
    Observation {
        devices,
        edge: server(&state.edge, Tier::Edge),
        cloud: server(&state.cloud, Tier::Cloud),
        requester: config.requester_index.then_some(state.round_index as u8),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub next_observation: Observation,
    pub reward: f64,
    pub response_time: SimDuration,
    pub window_art: f64,
    pub window_aa: f64,
    pub violated: bool,
    /// Device that issued the serviced request.
    pub device: usize,
    pub action: OrchestrationAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeRef {
    Device(usize),
    Edge,
    Cloud,
}

#[derive(Debug, Clone)]
struct Job {
    node: NodeRef,
    admitted: u64,
    footprint: u64,
    resident: bool,
    compute: SimDuration,
}

#[derive(Debug, Clone)]
struct Episode {
    topology: Topology,
    seed: u64,
    jobs: Vec<Job>,
    window: VecDeque<(SimDuration, Accuracy)>,
    round_index: usize,
    steps: u64,
    clock: SimDuration,
    observation: Observation,
}

/// One row of the optional per-step trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub device: usize,
    pub action: String,
    pub response_time_ms: f64,
    pub window_art: f64,
    pub window_aa: f64,
    pub violated: bool,
}

/// The end-edge-cloud simulator behind a reset/step interface.
///
/// Requests arrive round-robin, one per step. A job stays active on its node
/// until it falls out of the window of the last `n` requests, which is also
/// the window the cost is averaged over.
#[derive(Debug, Clone)]
pub struct Environment {
    config: SimConfig,
    catalog: Catalog,
    latency: LatencyModel,
    episode: Option<Episode>,
    trace: Option<Vec<TraceRow>>,
}

impl Environment {
    pub fn new(config: SimConfig, catalog: Catalog) -> Environment {
        let latency = LatencyModel::new(&config, &catalog);
        Environment { config, catalog, latency, episode: None, trace: None }
    }

    pub fn with_defaults() -> Environment {
        Environment::new(SimConfig::default(), Catalog::default())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    /// Starts recording a [`TraceRow`] per step.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    pub fn reset(&mut self, topology: Topology, seed: u64) -> Result<Observation, EnvError> {
        topology.validate()?;
        let state = ResourceState::idle(topology.clone());
        let observation = encode_state(&state, &self.config);
        let n = topology.n_devices();
        self.episode = Some(Episode {
            topology,
            seed,
            jobs: Vec::with_capacity(n),
            window: VecDeque::with_capacity(n),
            round_index: 0,
            steps: 0,
            clock: SimDuration::ZERO,
            observation: observation.clone(),
        });
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        Ok(observation)
    }

    fn episode(&self) -> Result<&Episode, EnvError> {
        self.episode.as_ref().ok_or(EnvError::NotReset)
    }

    pub fn layout(&self) -> Result<ObservationLayout, EnvError> {
        let ep = self.episode()?;
        Ok(ObservationLayout::new(ep.topology.n_devices(), self.config.requester_index))
    }

    pub fn observation(&self) -> Result<&Observation, EnvError> {
        Ok(&self.episode()?.observation)
    }

    pub fn topology(&self) -> Result<&Topology, EnvError> {
        Ok(&self.episode()?.topology)
    }

    pub fn seed(&self) -> Result<u64, EnvError> {
        Ok(self.episode()?.seed)
    }

    /// Number of `step` calls since the last reset.
    pub fn step_count(&self) -> u64 {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    /// Sum of all response times since the last reset.
    pub fn experience_time(&self) -> SimDuration {
        self.episode.as_ref().map_or(SimDuration::ZERO, |e| e.clock)
    }

    pub fn round_index(&self) -> Result<usize, EnvError> {
        Ok(self.episode()?.round_index)
    }

    pub fn resource_state(&self) -> Result<ResourceState, EnvError> {
        let ep = self.episode()?;
        Ok(snapshot(ep))
    }

    /// Exact sum of the response times currently in the window.
    pub fn window_sum(&self) -> Result<(SimDuration, usize), EnvError> {
        let ep = self.episode()?;
        Ok((ep.window.iter().map(|(rt, _)| *rt).sum(), ep.window.len()))
    }

    pub fn step(
        &mut self,
        action: OrchestrationAction,
        constraint: AccuracyConstraint,
    ) -> Result<StepOutcome, EnvError> {
        let (response_time, device) = self.advance(action)?;
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        let state = snapshot(ep);
        ep.observation = encode_state(&state, &self.config);

        let len = ep.window.len();
        let art_sum: u64 = ep.window.iter().map(|(rt, _)| rt.micros()).sum();
        let acc_sum: u64 = ep.window.iter().map(|(_, a)| a.hundredths() as u64).sum();
        let window_art = art_sum as f64 / len as f64 / 1000.0;
        let window_aa = acc_sum as f64 / len as f64 / 100.0;
        let violated = !constraint.admits_sum(acc_sum, len);
        let reward = if violated { window_art + self.config.penalty_ms } else { window_art };

        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                step: ep.steps,
                device,
                action: action.to_string(),
                response_time_ms: response_time.as_ms(),
                window_art,
                window_aa,
                violated,
            });
        }
        Ok(StepOutcome {
            next_observation: ep.observation.clone(),
            reward,
            response_time,
            window_art,
            window_aa,
            violated,
            device,
            action,
        })
    }

    /// Services one request without building an observation or outcome.
    /// Returns the response time and the requesting device.
    pub fn advance(&mut self, action: OrchestrationAction) -> Result<(SimDuration, usize), EnvError> {
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        let n = ep.topology.n_devices();
        let device = ep.round_index;
        let state = snapshot(ep);
        let response_time = self.latency.response_time(action, &state);

        let (node, tier) = match action.target {
            Target::Local => (NodeRef::Device(device), Tier::End),
            Target::Edge => (NodeRef::Edge, Tier::Edge),
            Target::Cloud => (NodeRef::Cloud, Tier::Cloud),
        };
        let model = self.catalog.get(action.model);
        let capacity = self.config.node(tier).mem_capacity;
        let resident_mem = state_load(&state, node).resident_mem;
        let footprint = model.mem_footprint();
        ep.jobs.push(Job {
            node,
            admitted: ep.steps,
            footprint,
            resident: resident_mem + footprint <= capacity,
            compute: self.latency.compute(tier, action.model),
        });

        if ep.window.len() == n {
            ep.window.pop_front();
        }
        ep.window.push_back((response_time, model.accuracy));
        ep.clock += response_time;
        ep.steps += 1;
        ep.round_index = (device + 1) % n;
        retire(ep, n, &self.config);
        Ok((response_time, device))
    }
}

fn state_load(state: &ResourceState, node: NodeRef) -> &NodeLoad {
    match node {
        NodeRef::Device(i) => &state.devices[i],
        NodeRef::Edge => &state.edge,
        NodeRef::Cloud => &state.cloud,
    }
}

/// Drops jobs admitted `n` or more steps ago and lets queued jobs take
/// memory freed by them.
fn retire(ep: &mut Episode, n: usize, config: &SimConfig) {
    let now = ep.steps;
    ep.jobs.retain(|j| j.admitted + n as u64 > now);
    for node in [NodeRef::Edge, NodeRef::Cloud]
        .into_iter()
        .chain((0..n).map(NodeRef::Device))
    {
        let tier = match node {
            NodeRef::Device(_) => Tier::End,
            NodeRef::Edge => Tier::Edge,
            NodeRef::Cloud => Tier::Cloud,
        };
        let capacity = config.node(tier).mem_capacity;
        let mut used: u64 = ep
            .jobs
            .iter()
            .filter(|j| j.node == node && j.resident)
            .map(|j| j.footprint)
            .sum();
        for job in ep.jobs.iter_mut().filter(|j| j.node == node && !j.resident) {
            if used + job.footprint <= capacity {
                job.resident = true;
                used += job.footprint;
            }
        }
    }
}

fn snapshot(ep: &Episode) -> ResourceState {
    let mut state = ResourceState::idle(ep.topology.clone());
    state.round_index = ep.round_index;
    // jobs are kept in admission order, so the first one seen is the head
    for job in &ep.jobs {
        let load = match job.node {
            NodeRef::Device(i) => &mut state.devices[i],
            NodeRef::Edge => &mut state.edge,
            NodeRef::Cloud => &mut state.cloud,
        };
        if load.active_jobs == 0 {
            load.head_compute = job.compute;
        }
        load.active_jobs += 1;
        if job.resident {
            load.resident_mem += job.footprint;
        }
    }
    state
}

/// Writes trace rows as CSV with a header.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| EnvError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| EnvError::Io(e.to_string()))
}
