use std::collections::BTreeMap;
use std::thread;

use serde::{Deserialize, Serialize};

use super::run::{default_budget, run_cell, AgentSettings, Cell, ConvergenceRecord, StoppingRule};
use super::HarnessError;
use crate::agents::AgentKind;
use crate::catalog::{AccuracyConstraint, Catalog};
use crate::oracle::{Evaluated, Oracle};
use crate::simenv::{Scenario, ScenarioSpec, SimConfig, Topology};

/// One agent on one environment cell over a list of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Scenario label used in reports.
    pub scenario: String,
    pub topology: Topology,
    pub constraint: AccuracyConstraint,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub settings: AgentSettings,
    #[serde(default)]
    pub rule: StoppingRule,
    /// Real-step budget; the size-dependent default when absent.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub sim: SimConfig,
}

impl ExperimentSpec {
    pub fn standard(
        scenario: Scenario,
        n_devices: usize,
        constraint: AccuracyConstraint,
        agent: AgentKind,
        seeds: Vec<u64>,
    ) -> Result<ExperimentSpec, HarnessError> {
        Ok(ExperimentSpec {
            scenario: scenario.to_string(),
            topology: scenario.topology(n_devices)?,
            constraint,
            agent,
            seeds,
            settings: AgentSettings::default(),
            rule: StoppingRule::default(),
            budget: None,
            sim: SimConfig::default(),
        })
    }

    /// From a scenario file; its seed becomes the only seed.
    pub fn from_scenario(spec: &ScenarioSpec, agent: AgentKind) -> ExperimentSpec {
        ExperimentSpec {
            scenario: spec.name.clone(),
            topology: spec.topology.clone(),
            constraint: spec.constraint,
            agent,
            seeds: vec![spec.seed],
            settings: AgentSettings::default(),
            rule: StoppingRule::default(),
            budget: None,
            sim: SimConfig::default(),
        }
    }

    pub fn n_devices(&self) -> usize {
        self.topology.n_devices()
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or_else(|| default_budget(self.n_devices()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        self.topology.validate()?;
        Ok(())
    }
}

/// Worker threads for independent runs.
pub(crate) fn workers(jobs: usize) -> usize {
    thread::available_parallelism().map_or(1, |p| p.get()).min(jobs).max(1)
}

/// Runs `jobs` on scoped worker threads and returns results in input order.
pub(crate) fn parallel_map<I, O, F>(jobs: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync,
{
    let n = workers(jobs.len());
    if n <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, O)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= jobs.len() {
                            break done;
                        }
                        done.push((i, f(&jobs[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("experiment worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, o)| o).collect()
}

/// Oracle optimum for the spec's cell.
pub fn optimum_for(spec: &ExperimentSpec, catalog: &Catalog) -> Result<Evaluated, HarnessError> {
    Ok(Oracle::new(spec.sim.clone(), catalog.clone()).optimal_configuration(&spec.topology, spec.constraint)?)
}

/// Trains the spec's agent once per seed, seeds in parallel. Records come
/// back in seed-list order and do not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ConvergenceRecord>, HarnessError> {
    let catalog = Catalog::default();
    let optimum = optimum_for(spec, &catalog)?;
    run_experiment_with(spec, &catalog, &optimum)
}

/// [`run_experiment`] with a precomputed optimum.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    catalog: &Catalog,
    optimum: &Evaluated,
) -> Result<Vec<ConvergenceRecord>, HarnessError> {
    spec.validate()?;
    let cell = Cell {
        sim: &spec.sim,
        catalog,
        topology: &spec.topology,
        constraint: spec.constraint,
        optimum,
        settings: &spec.settings,
        rule: spec.rule,
        budget: spec.budget(),
    };
    parallel_map(&spec.seeds, |&seed| run_cell(&cell, spec.agent, seed)).into_iter().collect()
}

/// How far a ratio can be trusted when some runs hit the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Exact,
    /// The numerator is censored by the budget: the true ratio is at least this.
    Lower,
    /// The denominator is censored: the true ratio is at most this.
    Upper,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub bound: Bound,
}

impl Ratio {
    fn of(num: &AgentSummary, den: &AgentSummary) -> Ratio {
        let bound = match (num.all_converged(), den.all_converged()) {
            (true, true) => Bound::Exact,
            (false, true) => Bound::Lower,
            (true, false) => Bound::Upper,
            (false, false) => Bound::Unknown,
        };
        Ratio { value: num.median_steps / den.median_steps.max(1.0), bound }
    }

    /// `12.3`, `>=12.3`, `<=12.3` or `~12.3`.
    pub fn display(&self) -> String {
        let prefix = match self.bound {
            Bound::Exact => "",
            Bound::Lower => ">=",
            Bound::Upper => "<=",
            Bound::Unknown => "~",
        };
        format!("{prefix}{:.2}", self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub seeds: usize,
    pub converged: usize,
    /// Median real steps; runs that hit the budget count at the budget.
    pub median_steps: f64,
    pub median_experience_ms: f64,
    pub median_policy_updates: f64,
    pub matched: usize,
}

impl AgentSummary {
    pub fn from_records(agent: AgentKind, records: &[ConvergenceRecord]) -> AgentSummary {
        let pick = |f: fn(&ConvergenceRecord) -> f64| median(records.iter().map(f).collect());
        AgentSummary {
            agent,
            seeds: records.len(),
            converged: records.iter().filter(|r| r.converged).count(),
            median_steps: pick(|r| r.real_env_steps as f64),
            median_experience_ms: pick(|r| r.experience_ms),
            median_policy_updates: pick(|r| r.policy_updates as f64),
            matched: records.iter().filter(|r| r.report.matches()).count(),
        }
    }

    pub fn all_converged(&self) -> bool {
        self.converged == self.seeds
    }
}

/// Median of a sample; the mean of the middle pair for even sizes, 0 when empty.
pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// One row of the speedup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub n_devices: usize,
    pub constraint: AccuracyConstraint,
    pub agents: BTreeMap<AgentKind, AgentSummary>,
    /// QL over HL median steps, when both ran.
    pub ql_over_hl: Option<Ratio>,
    pub dqn_over_hl: Option<Ratio>,
}

impl Comparison {
    pub fn from_records(
        scenario: &str,
        n_devices: usize,
        constraint: AccuracyConstraint,
        records: &BTreeMap<AgentKind, Vec<ConvergenceRecord>>,
    ) -> Comparison {
        let agents: BTreeMap<AgentKind, AgentSummary> =
            records.iter().map(|(&k, rs)| (k, AgentSummary::from_records(k, rs))).collect();
        let ratio = |num: AgentKind| match (agents.get(&num), agents.get(&AgentKind::Hl)) {
            (Some(a), Some(h)) => Some(Ratio::of(a, h)),
            _ => None,
        };
        Comparison {
            scenario: scenario.to_string(),
            n_devices,
            constraint,
            ql_over_hl: ratio(AgentKind::Ql),
            dqn_over_hl: ratio(AgentKind::Dqn),
            agents,
        }
    }
}

/// Step ratios (QL/HL, DQN/HL) reported for real deployments at Min, by
/// device count, printed next to ours for orientation.
pub fn reference_ratios(n_devices: usize) -> Option<(f64, f64)> {
    match n_devices {
        3 => Some((3.5, 5.0)),
        5 => Some((166.6, 10.0)),
        _ => None,
    }
}

/// Runs every agent in `agents` on one cell with the same seeds and
/// summarizes median steps and ratios against HL.
pub fn compare_agents(base: &ExperimentSpec, agents: &[AgentKind]) -> Result<Comparison, HarnessError> {
    let catalog = Catalog::default();
    let optimum = optimum_for(base, &catalog)?;
    let mut records = BTreeMap::new();
    for &agent in agents {
        let spec = ExperimentSpec { agent, ..base.clone() };
        records.insert(agent, run_experiment_with(&spec, &catalog, &optimum)?);
    }
    Ok(Comparison::from_records(&base.scenario, base.n_devices(), base.constraint, &records))
}

/// Plain-text speedup table, one line per comparison.
pub fn format_comparisons(rows: &[Comparison]) -> String {
    let mut out = String::from("exp  n  cnst   QL steps   DQN steps  HL steps   QL/HL    DQN/HL   ref QL/HL  ref DQN/HL\n");
    let steps = |c: &Comparison, k: AgentKind| {
        c.agents.get(&k).map_or("-".to_string(), |s| {
            let flag = if s.all_converged() { "" } else { "+" };
            format!("{:.0}{flag}", s.median_steps)
        })
    };
    let ratio = |r: &Option<Ratio>| r.map_or("-".to_string(), |r| r.display());
    for c in rows {
        let (rq, rd) = match reference_ratios(c.n_devices) {
            Some((q, d)) if c.constraint == AccuracyConstraint::Min => (format!("{q:.1}"), format!("{d:.1}")),
            _ => ("-".into(), "-".into()),
        };
        out.push_str(&format!(
            "{:<4} {:<2} {:<6} {:<10} {:<10} {:<10} {:<8} {:<8} {:<10} {}\n",
            c.scenario,
            c.n_devices,
            c.constraint.label(),
            steps(c, AgentKind::Ql),
            steps(c, AgentKind::Dqn),
            steps(c, AgentKind::Hl),
            ratio(&c.ql_over_hl),
            ratio(&c.dqn_over_hl),
            rq,
            rd
        ));
    }
    out
}
