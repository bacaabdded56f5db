//! Exhaustive search over joint configurations: the ground truth that learned
//! policies are scored against.

use std::fmt;
use std::io::Write;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{accuracy_sum, AccuracyConstraint, Catalog};
use crate::simenv::{
    EnvError, Environment, OrchestrationAction, SimConfig, SimDuration, Topology, ACTION_COUNT,
    MAX_DEVICES,
};

/// Replay rounds used to reach the steady state of a configuration.
pub const STEADY_STATE_ROUNDS: usize = 10;

/// Relative tolerance under which two average response times count as equal.
pub const COST_MATCH_RTOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("configuration has {got} actions for {expected} devices")]
    Arity { expected: usize, got: usize },
    #[error("no configuration satisfies {0}")]
    Infeasible(AccuracyConstraint),
    #[error("i/o: {0}")]
    Io(String),
}

/// One action per end device.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointConfiguration {
    pub actions: Vec<OrchestrationAction>,
}

impl JointConfiguration {
    pub fn new(actions: Vec<OrchestrationAction>) -> JointConfiguration {
        JointConfiguration { actions }
    }

    pub fn uniform(action: OrchestrationAction, n_devices: usize) -> JointConfiguration {
        JointConfiguration { actions: vec![action; n_devices] }
    }

    /// Decodes position `rank` of the lexicographic enumeration.
    pub fn from_rank(mut rank: u64, n_devices: usize) -> JointConfiguration {
        let mut actions = vec![OrchestrationAction::local(crate::catalog::ModelId::D0); n_devices];
        for slot in actions.iter_mut().rev() {
            *slot = OrchestrationAction::from_index((rank % ACTION_COUNT as u64) as usize)
                .expect("index below ACTION_COUNT");
            rank /= ACTION_COUNT as u64;
        }
        JointConfiguration { actions }
    }

    /// Position in the lexicographic enumeration (device 0 most significant).
    pub fn rank(&self) -> u64 {
        self.actions
            .iter()
            .fold(0, |acc, a| acc * ACTION_COUNT as u64 + a.index() as u64)
    }

    pub fn n_devices(&self) -> usize {
        self.actions.len()
    }

    /// Accuracy sum in hundredths.
    pub fn accuracy_sum(&self, catalog: &Catalog) -> u64 {
        accuracy_sum(self.actions.iter().map(|a| catalog.get(a.model))).0
    }

    pub fn average_accuracy(&self, catalog: &Catalog) -> f64 {
        self.accuracy_sum(catalog) as f64 / self.actions.len() as f64 / 100.0
    }

    pub fn feasible(&self, catalog: &Catalog, constraint: AccuracyConstraint) -> bool {
        constraint.admits_sum(self.accuracy_sum(catalog), self.actions.len())
    }
}

impl fmt::Display for JointConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Yields all `10^n` configurations once, in lexicographic action-index order.
pub fn enumerate_configurations(
    n_devices: usize,
) -> Result<impl Iterator<Item = JointConfiguration>, OracleError> {
    if !(1..=MAX_DEVICES).contains(&n_devices) {
        return Err(EnvError::Config(format!("n_devices must be in [1, {MAX_DEVICES}], got {n_devices}")).into());
    }
    let total = (ACTION_COUNT as u64).pow(n_devices as u32);
    Ok((0..total).map(move |r| JointConfiguration::from_rank(r, n_devices)))
}

/// A configuration with its steady-state metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub config: JointConfiguration,
    /// Exact sum of the final window's response times.
    pub window_sum: SimDuration,
    pub art_ms: f64,
    pub aa: f64,
}

impl Evaluated {
    fn key(&self) -> (u64, u64) {
        (self.window_sum.micros(), self.config.rank())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Identical action per device.
    pub exact_match: bool,
    /// Relative ART difference within [`COST_MATCH_RTOL`].
    pub cost_match: bool,
    /// The policy's configuration satisfies the constraint.
    pub feasible: bool,
    pub policy_art_ms: f64,
    pub oracle_art_ms: f64,
}

impl MatchReport {
    /// The acceptance signal: same cost as the optimum and feasible.
    pub fn matches(&self) -> bool {
        self.cost_match && self.feasible
    }
}

/// Brute-force evaluator bound to one simulator configuration.
#[derive(Debug, Clone)]
pub struct Oracle {
    env: Environment,
}

impl Oracle {
    pub fn new(config: SimConfig, catalog: Catalog) -> Oracle {
        Oracle { env: Environment::new(config, catalog) }
    }

    pub fn catalog(&self) -> &Catalog {
        self.env.catalog()
    }

    /// Replays `config` on a fresh environment for [`STEADY_STATE_ROUNDS`]
    /// rounds and returns the final window.
    pub fn evaluate(&mut self, config: &JointConfiguration, topology: &Topology) -> Result<Evaluated, OracleError> {
        let n = topology.n_devices();
        if config.n_devices() != n {
            return Err(OracleError::Arity { expected: n, got: config.n_devices() });
        }
        self.env.reset(topology.clone(), 0)?;
        for _ in 0..STEADY_STATE_ROUNDS {
            for &a in &config.actions {
                self.env.advance(a)?;
            }
        }
        let (window_sum, len) = self.env.window_sum()?;
        Ok(Evaluated {
            config: config.clone(),
            window_sum,
            art_ms: window_sum.micros() as f64 / len as f64 / 1000.0,
            aa: config.average_accuracy(self.env.catalog()),
        })
    }

    pub fn steady_state_art(&mut self, config: &JointConfiguration, topology: &Topology) -> Result<f64, OracleError> {
        Ok(self.evaluate(config, topology)?.art_ms)
    }

    /// Feasible minimum-ART configuration for every constraint level, in
    /// [`AccuracyConstraint::ALL`] order, from a single pass over the space.
    /// Ties go to the lexicographically first configuration.
    pub fn solve_all(&self, topology: &Topology) -> Result<Vec<Evaluated>, OracleError> {
        let n = topology.n_devices();
        let total = (ACTION_COUNT as u64).pow(n as u32);
        let workers = thread::available_parallelism().map_or(1, |p| p.get()).min(total as usize);
        let chunk = total.div_ceil(workers as u64);
        let partials: Vec<Result<Vec<Option<Evaluated>>, OracleError>> = thread::scope(|scope| {
            let handles: Vec<_> = (0..workers as u64)
                .map(|w| {
                    let mut oracle = self.clone();
                    let topology = topology.clone();
                    scope.spawn(move || {
                        let range = (w * chunk)..((w + 1) * chunk).min(total);
                        oracle.scan(range, n, &topology)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("oracle worker panicked")).collect()
        });
        let mut best: Vec<Option<Evaluated>> = vec![None; AccuracyConstraint::ALL.len()];
        for part in partials {
            for (slot, cand) in best.iter_mut().zip(part?) {
                merge(slot, cand);
            }
        }
        best.into_iter()
            .zip(AccuracyConstraint::ALL)
            .map(|(b, c)| b.ok_or(OracleError::Infeasible(c)))
            .collect()
    }

    fn scan(
        &mut self,
        range: std::ops::Range<u64>,
        n: usize,
        topology: &Topology,
    ) -> Result<Vec<Option<Evaluated>>, OracleError> {
        let mut best: Vec<Option<Evaluated>> = vec![None; AccuracyConstraint::ALL.len()];
        for rank in range {
            let config = JointConfiguration::from_rank(rank, n);
            let acc = config.accuracy_sum(self.env.catalog());
            if !AccuracyConstraint::Min.admits_sum(acc, n) {
                continue;
            }
            let eval = self.evaluate(&config, topology)?;
            for (slot, c) in best.iter_mut().zip(AccuracyConstraint::ALL) {
                if c.admits_sum(acc, n) {
                    merge(slot, Some(eval.clone()));
                }
            }
        }
        Ok(best)
    }

    pub fn optimal_configuration(
        &self,
        topology: &Topology,
        constraint: AccuracyConstraint,
    ) -> Result<Evaluated, OracleError> {
        let idx = AccuracyConstraint::ALL.iter().position(|&c| c == constraint).unwrap_or(0);
        Ok(self.solve_all(topology)?.swap_remove(idx))
    }

    pub fn policy_match(
        &mut self,
        policy: &JointConfiguration,
        optimum: &Evaluated,
        topology: &Topology,
        constraint: AccuracyConstraint,
    ) -> Result<MatchReport, OracleError> {
        let eval = self.evaluate(policy, topology)?;
        let denom = optimum.art_ms.abs().max(f64::MIN_POSITIVE);
        Ok(MatchReport {
            exact_match: *policy == optimum.config,
            cost_match: (eval.art_ms - optimum.art_ms).abs() / denom <= COST_MATCH_RTOL,
            feasible: policy.feasible(self.env.catalog(), constraint),
            policy_art_ms: eval.art_ms,
            oracle_art_ms: optimum.art_ms,
        })
    }
}

fn merge(slot: &mut Option<Evaluated>, cand: Option<Evaluated>) {
    if let Some(c) = cand {
        match slot {
            Some(cur) if cur.key() <= c.key() => {}
            _ => *slot = Some(c),
        }
    }
}

/// One row of a Table-IV-style report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub experiment: String,
    pub constraint: AccuracyConstraint,
    pub config: JointConfiguration,
    pub art_ms: f64,
    pub aa: f64,
}

/// Writes `Exp,Cnst,S1..Sn,ART(ms),AA(%)` with two-decimal numbers.
/// `n_devices` fixes the header width when `rows` is empty.
pub fn write_pareto_csv<W: Write>(rows: &[ParetoRow], n_devices: usize, out: W) -> Result<(), OracleError> {
    let io = |e: csv::Error| OracleError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Exp".to_string(), "Cnst".to_string()];
    header.extend((1..=n_devices).map(|i| format!("S{i}")));
    header.extend(["ART(ms)".to_string(), "AA(%)".to_string()]);
    w.write_record(&header).map_err(io)?;
    for row in rows {
        let mut rec = vec![row.experiment.clone(), row.constraint.label().to_string()];
        rec.extend(row.config.actions.iter().map(|a| a.to_string()));
        rec.push(format!("{:.2}", row.art_ms));
        rec.push(format!("{:.2}", row.aa));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| OracleError::Io(e.to_string()))
}
