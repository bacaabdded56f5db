use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{parallel_map, Comparison, ExperimentSpec};
use super::run::{default_budget, run_cell, AgentSettings, Cell, ConvergenceRecord, StoppingRule};
use super::HarnessError;
use crate::agents::AgentKind;
use crate::catalog::{AccuracyConstraint, Catalog};
use crate::oracle::{write_pareto_csv, Evaluated, Oracle, ParetoRow};
use crate::simenv::{Scenario, SimConfig, Topology};

/// The experiment matrix, usually read from a TOML file:
///
/// ```toml
/// users = [3]
/// scenarios = ["A", "B"]
/// constraints = ["Min", "85%"]
/// agents = ["QL", "DQN", "HL"]
/// seeds = [1, 2, 3, 4, 5]
/// budget = 50000
///
/// [settings.hybrid]
/// k = 3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub users: Vec<usize>,
    pub scenarios: Vec<Scenario>,
    pub constraints: Vec<AccuracyConstraint>,
    pub agents: Vec<AgentKind>,
    pub seeds: Vec<u64>,
    /// Real-step budget for every cell; size-dependent default when absent.
    pub budget: Option<u64>,
    pub rule: StoppingRule,
    pub settings: AgentSettings,
    pub sim: SimConfig,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            users: vec![3],
            scenarios: Scenario::ALL.to_vec(),
            constraints: AccuracyConstraint::ALL.to_vec(),
            agents: AgentKind::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            budget: None,
            rule: StoppingRule::default(),
            settings: AgentSettings::default(),
            sim: SimConfig::default(),
        }
    }
}

impl MatrixConfig {
    pub fn from_toml_str(text: &str) -> Result<MatrixConfig, HarnessError> {
        let config: MatrixConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<MatrixConfig, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        MatrixConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        for &n in &self.users {
            Scenario::A.topology(n)?;
        }
        Ok(())
    }

    fn budget_for(&self, n: usize) -> u64 {
        self.budget.unwrap_or_else(|| default_budget(n))
    }

    /// The spec of one agent on one cell of the matrix.
    pub fn spec(
        &self,
        scenario: Scenario,
        n_devices: usize,
        constraint: AccuracyConstraint,
        agent: AgentKind,
    ) -> Result<ExperimentSpec, HarnessError> {
        Ok(ExperimentSpec {
            scenario: scenario.to_string(),
            topology: scenario.topology(n_devices)?,
            constraint,
            agent,
            seeds: self.seeds.clone(),
            settings: self.settings.clone(),
            rule: self.rule,
            budget: Some(self.budget_for(n_devices)),
            sim: self.sim.clone(),
        })
    }
}

/// Everything measured on one scenario/size/constraint cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: String,
    pub n_devices: usize,
    pub constraint: AccuracyConstraint,
    pub optimum: Evaluated,
    pub records: BTreeMap<AgentKind, Vec<ConvergenceRecord>>,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub config: MatrixConfig,
    pub cells: Vec<CellReport>,
}

/// Oracle optima of every constraint for each (scenario, size) pair.
fn solve_optima(config: &MatrixConfig, catalog: &Catalog) -> Result<BTreeMap<(Scenario, usize), Vec<Evaluated>>, HarnessError> {
    let oracle = Oracle::new(config.sim.clone(), catalog.clone());
    let mut out = BTreeMap::new();
    for &n in &config.users {
        for &s in &config.scenarios {
            out.insert((s, n), oracle.solve_all(&s.topology(n)?)?);
        }
    }
    Ok(out)
}

fn constraint_index(c: AccuracyConstraint) -> usize {
    AccuracyConstraint::ALL.iter().position(|&x| x == c).expect("every constraint is listed")
}

/// Trains every (size, scenario, constraint, agent, seed) combination. Runs
/// are spread over worker threads; the report does not depend on how.
pub fn run_matrix(config: &MatrixConfig) -> Result<MatrixReport, HarnessError> {
    config.validate()?;
    let catalog = Catalog::default();
    let optima = solve_optima(config, &catalog)?;
    let mut jobs = Vec::new();
    for &n in &config.users {
        for &s in &config.scenarios {
            for &c in &config.constraints {
                for &a in &config.agents {
                    for &seed in &config.seeds {
                        jobs.push((s, n, c, a, seed));
                    }
                }
            }
        }
    }
    let topologies: BTreeMap<(Scenario, usize), Topology> =
        optima.keys().map(|&(s, n)| Ok(((s, n), s.topology(n)?))).collect::<Result<_, HarnessError>>()?;
    let results = parallel_map(&jobs, |&(s, n, c, a, seed)| {
        let cell = Cell {
            sim: &config.sim,
            catalog: &catalog,
            topology: &topologies[&(s, n)],
            constraint: c,
            optimum: &optima[&(s, n)][constraint_index(c)],
            settings: &config.settings,
            rule: config.rule,
            budget: config.budget_for(n),
        };
        run_cell(&cell, a, seed)
    });

    let mut grouped: BTreeMap<(usize, Scenario, AccuracyConstraint), BTreeMap<AgentKind, Vec<ConvergenceRecord>>> =
        BTreeMap::new();
    for (&(s, n, c, a, _), r) in jobs.iter().zip(results) {
        grouped.entry((n, s, c)).or_default().entry(a).or_default().push(r?);
    }
    let cells = grouped
        .into_iter()
        .map(|((n, s, c), records)| CellReport {
            scenario: s.to_string(),
            n_devices: n,
            constraint: c,
            optimum: optima[&(s, n)][constraint_index(c)].clone(),
            comparison: Comparison::from_records(&s.to_string(), n, c, &records),
            records,
        })
        .collect();
    Ok(MatrixReport { config: config.clone(), cells })
}

/// Pareto rows from the oracle, scenarios in order, constraints
/// Min to Max.
pub fn oracle_pareto_rows(
    scenarios: &[(String, Topology)],
    constraints: &[AccuracyConstraint],
    sim: &SimConfig,
    catalog: &Catalog,
) -> Result<Vec<ParetoRow>, HarnessError> {
    let oracle = Oracle::new(sim.clone(), catalog.clone());
    let mut rows = Vec::new();
    for (name, topology) in scenarios {
        let all = oracle.solve_all(topology)?;
        for &c in constraints {
            let e = &all[constraint_index(c)];
            rows.push(ParetoRow {
                experiment: name.clone(),
                constraint: c,
                config: e.config.clone(),
                art_ms: e.art_ms,
                aa: e.aa,
            });
        }
    }
    Ok(rows)
}

/// The same rows built from an agent's final greedy policies, using the run
/// with the first listed seed of each cell.
pub fn agent_pareto_rows(report: &MatrixReport, agent: AgentKind, n_devices: usize, catalog: &Catalog) -> Vec<ParetoRow> {
    report
        .cells
        .iter()
        .filter(|c| c.n_devices == n_devices)
        .filter_map(|c| {
            let r = c.records.get(&agent)?.first()?;
            Some(ParetoRow {
                experiment: c.scenario.clone(),
                constraint: c.constraint,
                config: r.policy.clone(),
                art_ms: r.report.policy_art_ms,
                aa: r.policy.average_accuracy(catalog),
            })
        })
        .collect()
}

/// Writes Pareto rows to one CSV file; header only when empty.
pub fn emit_pareto_table(rows: &[ParetoRow], n_devices: usize, path: &Path) -> Result<(), HarnessError> {
    write_pareto_csv(rows, n_devices, create(path)?)?;
    Ok(())
}

/// One `pareto_<S><suffix>.csv` file per scenario label under `out`.
pub fn emit_pareto_tables(rows: &[ParetoRow], n_devices: usize, out: &Path, suffix: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let mut by_exp: BTreeMap<&str, Vec<ParetoRow>> = BTreeMap::new();
    for r in rows {
        by_exp.entry(r.experiment.as_str()).or_default().push(r.clone());
    }
    let mut written = Vec::new();
    for (exp, rows) in by_exp {
        let path = out.join(format!("pareto_{exp}{suffix}.csv"));
        emit_pareto_table(&rows, n_devices, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn create(path: &Path) -> Result<fs::File, HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// One line per run: `agent,scenario,n,constraint,seed,converged,...`.
pub fn write_records_csv<W: Write>(report: &MatrixReport, out: W) -> Result<(), HarnessError> {
    let io = |e: csv::Error| HarnessError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "agent",
        "scenario",
        "n_devices",
        "constraint",
        "seed",
        "converged",
        "real_env_steps",
        "first_match_step",
        "experience_ms",
        "policy_updates",
        "model_updates",
        "policy",
        "policy_art_ms",
        "oracle_art_ms",
        "cost_match",
    ])
    .map_err(io)?;
    for cell in &report.cells {
        for (agent, records) in &cell.records {
            for r in records {
                w.write_record([
                    agent.to_string(),
                    cell.scenario.clone(),
                    cell.n_devices.to_string(),
                    cell.constraint.to_string(),
                    r.seed.to_string(),
                    r.converged.to_string(),
                    r.real_env_steps.to_string(),
                    r.first_match_step.map(|s| s.to_string()).unwrap_or_default(),
                    format!("{:.3}", r.experience_ms),
                    r.policy_updates.to_string(),
                    r.model_updates.to_string(),
                    r.policy.to_string(),
                    format!("{:.3}", r.report.policy_art_ms),
                    format!("{:.3}", r.report.oracle_art_ms),
                    r.report.cost_match.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

/// Writes `summary.json`, `records.csv`, `speedup.txt` and oracle and
/// per-agent Pareto tables under `out`. Returns the files written.
pub fn write_matrix_outputs(report: &MatrixReport, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let catalog = Catalog::default();
    let mut written = Vec::new();

    let path = out.join("summary.json");
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, report).map_err(|e| HarnessError::Io(e.to_string()))?;
    f.write_all(b"\n").map_err(|e| HarnessError::Io(e.to_string()))?;
    written.push(path);

    let path = out.join("records.csv");
    write_records_csv(report, create(&path)?)?;
    written.push(path);

    let path = out.join("speedup.txt");
    let table: Vec<Comparison> = report.cells.iter().map(|c| c.comparison.clone()).collect();
    create(&path)?
        .write_all(super::experiment::format_comparisons(&table).as_bytes())
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    written.push(path);

    for &n in &report.config.users {
        let scenarios: Vec<(String, Topology)> = report
            .config
            .scenarios
            .iter()
            .map(|s| Ok((s.to_string(), s.topology(n)?)))
            .collect::<Result<_, HarnessError>>()?;
        let rows = oracle_pareto_rows(&scenarios, &report.config.constraints, &report.config.sim, &catalog)?;
        written.extend(emit_pareto_tables(&rows, n, out, &format!("_n{n}_oracle"))?);
        for &agent in &report.config.agents {
            let rows = agent_pareto_rows(report, agent, n, &catalog);
            written.extend(emit_pareto_tables(&rows, n, out, &format!("_n{n}_{agent}"))?);
        }
    }
    Ok(written)
}
