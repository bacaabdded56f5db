//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 on usage or configuration errors, 2 when a run or check
//! did not reach its target (`train --strict`, `check`).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agents::AgentKind;
use crate::catalog::{AccuracyConstraint, Catalog};
use crate::harness::{
    compare_agents, emit_pareto_tables, format_comparisons, oracle_pareto_rows, run_checks, run_experiment,
    run_matrix, write_matrix_outputs, ExperimentSpec, HarnessError, MatrixConfig,
};
use crate::simenv::{Scenario, ScenarioSpec, SimConfig, Topology};

#[derive(Debug, Parser)]
#[command(name = "dynaorch", version, about = "Inference orchestration simulator, oracle and RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the optimal configuration per constraint as pareto_<S>.csv.
    Oracle(CellArgs),
    /// Train one agent on one cell, one run per seed.
    Train(TrainArgs),
    /// Compare agents on one cell, or on the whole matrix of a config file.
    Compare(CellArgs),
    /// Run the invariant suite.
    Check,
}

#[derive(Debug, Args)]
struct CellArgs {
    /// Scenario letters (A-D, comma separated) or a scenario TOML file.
    #[arg(long, default_value = "A")]
    scenario: String,
    #[arg(long, default_value_t = 3)]
    users: usize,
    /// Constraint labels, comma separated: Min, 80%, 85%, 89%, Max.
    #[arg(long)]
    constraint: Option<String>,
    /// Agent kinds, comma separated.
    #[arg(long)]
    agent: Option<String>,
    /// `N` for seeds 1..=N, `a..b` for a range, or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Experiment matrix in TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// Exit with status 2 unless every seed converges.
    #[arg(long)]
    strict: bool,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, HarnessError> {
    match command {
        Command::Oracle(args) => oracle(&args, out),
        Command::Train(args) => train(&args, out),
        Command::Compare(args) => compare(&args, out),
        Command::Check => check(out),
    }
}

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// Seed list syntax: `5` is 1..=5, `3..7` is 3..=7, `1,4,9` is explicit.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("bad seed list `{text}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).collect()
    } else if text.contains(',') {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    } else {
        let n: u64 = text.trim().parse().map_err(|_| bad())?;
        (1..=n).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn parse_list<T, E: std::fmt::Display>(text: &str, f: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, HarnessError> {
    text.split(',').map(|s| f(s.trim()).map_err(|e| HarnessError::Config(e.to_string()))).collect()
}

fn constraints(args: &CellArgs) -> Result<Vec<AccuracyConstraint>, HarnessError> {
    match &args.constraint {
        Some(c) => parse_list(c, str::parse::<AccuracyConstraint>),
        None => Ok(AccuracyConstraint::ALL.to_vec()),
    }
}

fn agents(args: &CellArgs) -> Result<Vec<AgentKind>, HarnessError> {
    match &args.agent {
        Some(a) => parse_list(a, str::parse::<AgentKind>),
        None => Ok(AgentKind::ALL.to_vec()),
    }
}

/// Named topologies: scenario letters, or one custom scenario file.
fn scenarios(args: &CellArgs) -> Result<Vec<(String, Topology, Option<ScenarioSpec>)>, HarnessError> {
    let path = Path::new(&args.scenario);
    if path.extension().is_some_and(|e| e == "toml") {
        let spec = ScenarioSpec::from_file(path)?;
        return Ok(vec![(spec.name.clone(), spec.topology.clone(), Some(spec))]);
    }
    parse_list(&args.scenario, str::parse::<Scenario>)?
        .into_iter()
        .map(|s| Ok((s.to_string(), s.topology(args.users)?, None)))
        .collect()
}

/// One spec per (scenario, constraint) for `agent`, with CLI overrides.
fn cell_specs(args: &CellArgs, agent: AgentKind) -> Result<Vec<ExperimentSpec>, HarnessError> {
    let mut specs = Vec::new();
    for (name, topology, file) in scenarios(args)? {
        let cs = match (&file, &args.constraint) {
            (Some(f), None) => vec![f.constraint],
            _ => constraints(args)?,
        };
        let seeds = match (&args.seeds, &file) {
            (Some(s), _) => parse_seeds(s)?,
            (None, Some(f)) => vec![f.seed],
            (None, None) => vec![1],
        };
        for constraint in cs {
            let mut spec = ExperimentSpec::standard(Scenario::A, topology.n_devices(), constraint, agent, seeds.clone())?;
            spec.scenario = name.clone();
            spec.topology = topology.clone();
            spec.budget = args.budget;
            spec.validate()?;
            specs.push(spec);
        }
    }
    Ok(specs)
}

fn oracle(args: &CellArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let named: Vec<(String, Topology)> = scenarios(args)?.into_iter().map(|(n, t, _)| (n, t)).collect();
    let n = named.first().map_or(args.users, |(_, t)| t.n_devices());
    let rows = oracle_pareto_rows(&named, &constraints(args)?, &SimConfig::default(), &Catalog::default())?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    for path in emit_pareto_tables(&rows, n, &dir, "")? {
        writeln!(out, "wrote {}", path.display()).map_err(io)?;
    }
    Ok(0)
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let agent = match agents(&args.cell)?.as_slice() {
        [a] => *a,
        _ if args.cell.agent.is_none() => AgentKind::Hl,
        _ => return Err(HarnessError::Config("train takes a single agent".into())),
    };
    let mut all_converged = true;
    let mut records = Vec::new();
    for spec in cell_specs(&args.cell, agent)? {
        for r in run_experiment(&spec)? {
            writeln!(
                out,
                "{} {} n={} {} seed={} converged={} steps={} experience_ms={:.1} updates={} policy=[{}] art={:.3} oracle={:.3}",
                r.agent,
                spec.scenario,
                spec.n_devices(),
                spec.constraint,
                r.seed,
                r.converged,
                r.real_env_steps,
                r.experience_ms,
                r.policy_updates,
                r.policy,
                r.report.policy_art_ms,
                r.report.oracle_art_ms
            )
            .map_err(io)?;
            all_converged &= r.converged;
            records.push(r);
        }
    }
    if let Some(dir) = &args.cell.out {
        std::fs::create_dir_all(dir).map_err(io)?;
        let f = std::fs::File::create(dir.join("records.json")).map_err(io)?;
        serde_json::to_writer_pretty(f, &records).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(if args.strict && !all_converged { 2 } else { 0 })
}

fn compare(args: &CellArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    if let Some(path) = &args.config {
        let mut config = MatrixConfig::from_file(path)?;
        if let Some(b) = args.budget {
            config.budget = Some(b);
        }
        if let Some(s) = &args.seeds {
            config.seeds = parse_seeds(s)?;
        }
        let report = run_matrix(&config)?;
        let table: Vec<_> = report.cells.iter().map(|c| c.comparison.clone()).collect();
        out.write_all(format_comparisons(&table).as_bytes()).map_err(io)?;
        if let Some(dir) = &args.out {
            for p in write_matrix_outputs(&report, dir)? {
                writeln!(out, "wrote {}", p.display()).map_err(io)?;
            }
        }
        return Ok(0);
    }
    let agents = agents(args)?;
    let mut rows = Vec::new();
    for base in cell_specs(args, agents[0])? {
        if base.seeds.len() < 3 {
            return Err(HarnessError::Config("compare needs at least 3 seeds".into()));
        }
        rows.push(compare_agents(&base, &agents)?);
    }
    let table = format_comparisons(&rows);
    out.write_all(table.as_bytes()).map_err(io)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("speedup.txt"), &table).map_err(io)?;
        let f = std::fs::File::create(dir.join("comparison.json")).map_err(io)?;
        serde_json::to_writer_pretty(f, &rows).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(0)
}

fn check(out: &mut dyn Write) -> Result<i32, HarnessError> {
    let outcomes = run_checks()?;
    for c in &outcomes {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io)?;
    }
    Ok(if outcomes.iter().all(|c| c.passed) { 0 } else { 2 })
}
