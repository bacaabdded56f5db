//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion.
//!
//! Criteria 1 and 2 train agents and are slow. By default they run on a
//! reduced scope (named on their line); set `DYNAORCH_ACCEPTANCE=full` for
//! the complete matrix. Their outcome is reported but not asserted, because
//! they measure learning results rather than code contracts; every other
//! criterion must pass.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;

use dynaorch::agents::{
    dqn_train, hybrid_train, session_counts, AgentKind, DqnAgent, DqnConfig, HybridAgent, HybridSchedule, NoMonitor,
    TrainingLog,
};
use dynaorch::approx::{max_gradient_error, AdamConfig, AdamState, Gradients, Mlp, PrioritizedBuffer, Sample, Supervision, Transition};
use dynaorch::catalog::{average_accuracy, AccuracyConstraint, Catalog, ModelId, Precision};
use dynaorch::harness::{
    oracle_pareto_rows, run_matrix, write_matrix_outputs, AgentSummary, MatrixConfig, MatrixReport, REFERENCE_CATALOG,
};
use dynaorch::oracle::{write_pareto_csv, Oracle};
use dynaorch::simenv::{
    Environment, LatencyModel, LinkQuality, OrchestrationAction, ResourceState, Scenario, SimConfig, SimDuration, Target,
    Topology, ACTION_COUNT, MAX_DEVICES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1
const MAX_MISSED_CELLS_PER_SEED: usize = 1;
const COST_RTOL: f64 = 1e-6;
// Criterion 2
const MIN_SPEEDUP_SMALL: f64 = 3.0;
const MIN_SPEEDUP_LARGE: f64 = 10.0;
const SPEEDUP_SEEDS: u64 = 5;
// Criterion 3
const AA_TOL: f64 = 0.01;
// Criterion 4
const MIN_GAP_85_TO_89: f64 = 0.30;
const GAP_DEVICES: usize = 5;
// Criterion 5
const WEAK_DELAY_MS: f64 = 20.0;
// Criterion 6
const GRAD_NETS: usize = 100;
const GRAD_RTOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
/// `lr * m_hat / (sqrt(v_hat) + eps)` with `m_hat = v_hat = 1`.
const FIRST_ADAM_STEP: f64 = -1e-3 / (1.0 + 1e-8);
const ADAM_TOL: f64 = 1e-12;
const CHI2_DRAWS: usize = 100_000;
/// 95% quantile of chi-square with 7 degrees of freedom.
const CHI2_95_DF7: f64 = 14.067;
// Criterion 7
const EQUIVALENCE_STEPS: u64 = 3_000;

const REPORT_ONLY: [u8; 2] = [1, 2];

fn full_scope() -> bool {
    std::env::var("DYNAORCH_ACCEPTANCE").is_ok_and(|v| v == "full")
}

struct Line {
    id: u8,
    passed: bool,
    detail: String,
}

fn line(id: u8, passed: bool, detail: impl Into<String>) -> Line {
    let l = Line { id, passed, detail: detail.into() };
    // Written to the raw handle so the lines survive libtest output capture.
    let text = format!("{} criterion {}: {}\n", if l.passed { "PASS" } else { "FAIL" }, l.id, l.detail);
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
    l
}

#[test]
fn acceptance() {
    let lines = vec![
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_1(),
        criterion_2(),
    ];
    let broken: Vec<u8> = lines.iter().filter(|l| !l.passed && !REPORT_ONLY.contains(&l.id)).map(|l| l.id).collect();
    assert!(broken.is_empty(), "failed criteria: {broken:?}");
}

fn learning_config(scenarios: Vec<Scenario>, constraints: Vec<AccuracyConstraint>, agents: Vec<AgentKind>, seeds: Vec<u64>) -> MatrixConfig {
    MatrixConfig { users: vec![3], scenarios, constraints, agents, seeds, ..MatrixConfig::default() }
}

fn criterion_1() -> Line {
    let (config, scope) = if full_scope() {
        (learning_config(Scenario::ALL.to_vec(), AccuracyConstraint::ALL.to_vec(), vec![AgentKind::Dqn, AgentKind::Hl], (1..=5).collect()), "full")
    } else {
        (learning_config(vec![Scenario::A], AccuracyConstraint::ALL.to_vec(), vec![AgentKind::Dqn, AgentKind::Hl], vec![1]), "reduced: scenario A, seed 1")
    };
    let report = run_matrix(&config).expect("matrix runs");
    let mut passed = true;
    let mut parts = Vec::new();
    for agent in [AgentKind::Dqn, AgentKind::Hl] {
        let mut missed_per_seed: BTreeMap<u64, Vec<String>> = config.seeds.iter().map(|&s| (s, Vec::new())).collect();
        for cell in &report.cells {
            for r in &cell.records[&agent] {
                let rel = (r.report.policy_art_ms - r.report.oracle_art_ms).abs() / r.report.oracle_art_ms;
                if !(rel <= COST_RTOL && r.report.feasible) {
                    missed_per_seed.get_mut(&r.seed).unwrap().push(format!("{}/{}", cell.scenario, cell.constraint));
                }
            }
        }
        let misses: Vec<usize> = missed_per_seed.values().map(Vec::len).collect();
        let mut sorted = misses.clone();
        sorted.sort_unstable();
        let median = sorted[sorted.len() / 2];
        passed &= misses.iter().all(|&m| m <= MAX_MISSED_CELLS_PER_SEED) && median == 0;
        let cells = report.cells.len();
        let worst: Vec<String> = missed_per_seed.iter().filter(|(_, m)| !m.is_empty()).map(|(s, m)| format!("seed {s}: {}", m.join(" "))).collect();
        parts.push(format!(
            "{agent} matched per seed {:?} of {cells}{}",
            misses.iter().map(|m| cells - m).collect::<Vec<_>>(),
            if worst.is_empty() { String::new() } else { format!(" (missed {})", worst.join("; ")) }
        ));
    }
    line(1, passed, format!("[{scope}] {}", parts.join(", ")))
}

fn summaries(report: &MatrixReport, cell: usize) -> BTreeMap<AgentKind, AgentSummary> {
    report.cells[cell].comparison.agents.clone()
}

fn criterion_2() -> Line {
    let agents = AgentKind::ALL.to_vec();
    let seeds: Vec<u64> = (1..=SPEEDUP_SEEDS).collect();
    let (constraints, scope) = if full_scope() {
        (vec![AccuracyConstraint::Min, AccuracyConstraint::P80, AccuracyConstraint::P85, AccuracyConstraint::Max], "full")
    } else {
        (vec![AccuracyConstraint::Min], "reduced: Min only, 3 devices only")
    };
    let report = run_matrix(&learning_config(vec![Scenario::A], constraints, agents, seeds.clone())).expect("matrix runs");
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, cell) in report.cells.iter().enumerate() {
        let s = summaries(&report, i);
        let (ql, dqn, hl) = (&s[&AgentKind::Ql], &s[&AgentKind::Dqn], &s[&AgentKind::Hl]);
        passed &= hl.median_steps * MIN_SPEEDUP_SMALL <= dqn.median_steps && hl.median_steps * MIN_SPEEDUP_SMALL <= ql.median_steps;
        parts.push(format!(
            "n3 {}: median steps QL {:.0} DQN {:.0} HL {:.0} (QL/HL {:.2}, DQN/HL {:.2})",
            cell.constraint,
            ql.median_steps,
            dqn.median_steps,
            hl.median_steps,
            ql.median_steps / hl.median_steps.max(1.0),
            dqn.median_steps / hl.median_steps.max(1.0)
        ));
    }
    if full_scope() {
        let config = MatrixConfig {
            users: vec![5],
            scenarios: vec![Scenario::A],
            constraints: vec![AccuracyConstraint::Min],
            agents: vec![AgentKind::Ql, AgentKind::Hl],
            seeds,
            ..MatrixConfig::default()
        };
        let report = run_matrix(&config).expect("matrix runs");
        let s = summaries(&report, 0);
        let (ql, hl) = (&s[&AgentKind::Ql], &s[&AgentKind::Hl]);
        passed &= hl.median_steps * MIN_SPEEDUP_LARGE <= ql.median_steps;
        parts.push(format!(
            "n5 Min: median steps QL {:.0} HL {:.0} (QL/HL {:.2})",
            ql.median_steps,
            hl.median_steps,
            ql.median_steps / hl.median_steps.max(1.0)
        ));
    }
    line(2, passed, format!("[{scope}] {}", parts.join("; ")))
}

fn criterion_3() -> Line {
    let catalog = Catalog::default();
    let mut problems = Vec::new();
    if catalog.models().len() != REFERENCE_CATALOG.len() {
        problems.push(format!("{} rows", catalog.models().len()));
    }
    for (m, (macs, precision, acc)) in catalog.models().iter().zip(REFERENCE_CATALOG) {
        if m.macs != macs || m.precision != precision || m.accuracy.hundredths() != (acc * 100.0).round() as u32 {
            problems.push(format!("row {}", m.id));
        }
    }
    // anchors: five d7, five d0, and one d0 with four d4
    let pick = |ids: &[usize]| ids.iter().map(|&i| catalog.models()[i].clone()).collect::<Vec<_>>();
    for (ids, expected) in [(vec![7; 5], 72.80), (vec![0; 5], 89.90), (vec![0, 4, 4, 4, 4], 89.10)] {
        let aa = average_accuracy(&pick(&ids)).unwrap();
        if (aa - expected).abs() > AA_TOL {
            problems.push(format!("anchor {expected}: {aa}"));
        }
    }
    // every emitted row: AA column equals the mean of the listed models
    let mut rows_checked = 0;
    for n in 1..=MAX_DEVICES {
        let named: Vec<(String, Topology)> = Scenario::ALL.iter().map(|s| (s.to_string(), s.topology(n).unwrap())).collect();
        let rows = oracle_pareto_rows(&named, &AccuracyConstraint::ALL, &SimConfig::default(), &catalog).unwrap();
        let mut csv_bytes = Vec::new();
        write_pareto_csv(&rows, n, &mut csv_bytes).unwrap();
        let mut reader = csv::Reader::from_reader(csv_bytes.as_slice());
        for rec in reader.records() {
            let rec = rec.unwrap();
            let models: Vec<_> = (2..2 + n)
                .map(|i| {
                    let a: OrchestrationAction = rec[i].parse().unwrap();
                    catalog.get(a.model).clone()
                })
                .collect();
            let aa: f64 = rec[2 + n + 1].parse().unwrap();
            let mean = average_accuracy(&models).unwrap();
            if (aa - mean).abs() > AA_TOL {
                problems.push(format!("n{n} {} {}: {aa} vs {mean}", &rec[0], &rec[1]));
            }
            rows_checked += 1;
        }
    }
    let ok = problems.is_empty();
    line(3, ok, if ok { format!("8 catalog rows exact; 3 anchors; {rows_checked} emitted rows within {AA_TOL}") } else { problems.join("; ") })
}

fn criterion_4() -> Line {
    let oracle = Oracle::new(SimConfig::default(), Catalog::default());
    let mut problems = Vec::new();
    let mut gap = 0.0;
    for n in 1..=MAX_DEVICES {
        for s in Scenario::ALL {
            let arts: Vec<f64> = oracle.solve_all(&s.topology(n).unwrap()).unwrap().iter().map(|e| e.art_ms).collect();
            if arts.windows(2).any(|w| w[1] < w[0]) {
                problems.push(format!("{s} n{n}: {arts:?}"));
            }
            if s == Scenario::A && n == GAP_DEVICES {
                gap = arts[3] / arts[2] - 1.0;
            }
        }
    }
    if gap < MIN_GAP_85_TO_89 {
        problems.push(format!("85%->89% gap {:.1}%", gap * 100.0));
    }
    let ok = problems.is_empty();
    line(
        4,
        ok,
        if ok {
            format!("non-decreasing in every scenario for 1..={MAX_DEVICES} devices; A 85%->89% gap {:.1}% at {GAP_DEVICES} devices", gap * 100.0)
        } else {
            problems.join("; ")
        },
    )
}

fn all_topologies(n: usize) -> Vec<Topology> {
    (0..1u32 << (n + 1))
        .map(|bits| {
            let q = |i: usize| if bits >> i & 1 == 1 { LinkQuality::Weak } else { LinkQuality::Regular };
            Topology::new((0..n).map(q).collect(), q(n)).unwrap()
        })
        .collect()
}

fn criterion_5() -> Line {
    let config = SimConfig::default();
    let latency = LatencyModel::new(&config, &Catalog::default());
    let per = SimDuration::from_ms(WEAK_DELAY_MS).micros() as i64;
    let mut problems = Vec::new();
    let mut cases = 0u64;
    for n in 1..=MAX_DEVICES {
        for t in all_topologies(n) {
            for who in 0..n {
                for a in OrchestrationAction::all() {
                    let mut s = ResourceState::idle(t.clone());
                    s.round_index = who;
                    let base = latency.response_time(a, &s).micros() as i64;
                    // flip the requester's link, then the edge link
                    for edge in [false, true] {
                        let mut w = s.clone();
                        let (was_weak, traversals) = if edge {
                            w.topology.edge_link = LinkQuality::Weak;
                            (t.edge_link.is_weak(), if a.target == Target::Cloud { 2 } else { 0 })
                        } else {
                            w.topology.device_links[who] = LinkQuality::Weak;
                            (t.device_links[who].is_weak(), if a.target == Target::Local { 0 } else { 2 })
                        };
                        let expected = if was_weak { 0 } else { traversals * per };
                        let diff = latency.response_time(a, &w).micros() as i64 - base;
                        if diff != expected {
                            problems.push(format!("{} {a} dev {who} edge {edge}: {diff}us", t.signature()));
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    // along whole trajectories: same actions, one link flipped
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let actions: Vec<OrchestrationAction> =
            (0..60).map(|_| OrchestrationAction::from_index(rng.gen_range(0..ACTION_COUNT)).unwrap()).collect();
        let n = rng.gen_range(1..=MAX_DEVICES);
        let regular = Topology::uniform(n, LinkQuality::Regular).unwrap();
        let mut weak = regular.clone();
        let dev = rng.gen_range(0..n);
        weak.device_links[dev] = LinkQuality::Weak;
        let times = |t: &Topology| {
            let mut env = Environment::with_defaults();
            env.reset(t.clone(), 1).unwrap();
            actions.iter().map(|&a| env.step(a, AccuracyConstraint::Min).unwrap()).collect::<Vec<_>>()
        };
        for (r, w) in times(&regular).iter().zip(times(&weak)) {
            let expected = if r.device == dev && r.action.target != Target::Local { 2 * per } else { 0 };
            let diff = w.response_time.micros() as i64 - r.response_time.micros() as i64;
            if diff != expected {
                problems.push(format!("trajectory n{n}: {diff}us"));
            }
            cases += 1;
        }
    }
    let ok = problems.is_empty();
    line(5, ok, if ok { format!("{cases} cases exact") } else { problems.into_iter().take(5).collect::<Vec<_>>().join("; ") })
}

fn criterion_6() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..GRAD_NETS {
        let depth = rng.gen_range(2..=4);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=16)).collect();
        let mut net: Mlp<f64> = Mlp::zeros(&sizes).unwrap();
        net.params_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
        let batch = rng.gen_range(1..=4);
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ts: Vec<Vec<f64>> = (0..batch).map(|_| (0..sizes[depth - 1]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let samples: Vec<Sample<'_, f64>> = xs
            .iter()
            .zip(&ts)
            .map(|(x, t)| Sample { input: x, target: Supervision::All(t), weight: rng.gen_range(0.1..2.0) })
            .collect();
        worst = worst.max(max_gradient_error(&net, &samples, FD_STEP, 1e-6).unwrap());
    }

    let mut net: Mlp<f64> = Mlp::zeros(&[1, 1]).unwrap();
    let mut g = Gradients::zeros_like(&net);
    g.layers[0].weights[0] = 1.0;
    let mut adam = AdamState::new(&net, AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 });
    adam.update(&mut net, &g).unwrap();
    let step = net.layers()[0].weights[0];

    // equal priorities over 8 slots: sampling must be uniform
    let mut buf: PrioritizedBuffer<f64> = PrioritizedBuffer::new(8, 0.6, 1e-3);
    for i in 0..8 {
        buf.push(Transition { state: vec![i as f64], action: i, cost: 0.0, next_state: vec![0.0] });
    }
    buf.update_priorities(&(0..8).collect::<Vec<_>>(), &[0.5; 8]);
    let mut counts = [0usize; 8];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..CHI2_DRAWS {
        counts[buf.sample(1, 1.0, &mut rng).unwrap().indices[0]] += 1;
    }
    let e = CHI2_DRAWS as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();

    let ok = worst < GRAD_RTOL && (step - FIRST_ADAM_STEP).abs() < ADAM_TOL && chi2 < CHI2_95_DF7;
    line(
        6,
        ok,
        format!("gradient rel err {worst:.2e} over {GRAD_NETS} nets; first Adam step {step:.12e}; chi2 {chi2:.2} (< {CHI2_95_DF7})"),
    )
}

fn criterion_7() -> Line {
    let mut problems = Vec::new();
    let s = HybridSchedule::default();
    let n = s.n_epochs;
    for epoch in 1..=3 * n {
        let e = epoch.min(n);
        if s.alpha(epoch) != e as f64 / n as f64 {
            problems.push(format!("alpha at epoch {epoch}"));
        }
        let down = |base: usize| ((1.0 - s.alpha(epoch) / 2.0) * base as f64).round() as usize;
        let up = |base: usize| ((s.alpha(epoch) + 1.0) / 2.0 * base as f64).round() as usize;
        let c = session_counts(&s, epoch);
        if (c.direct, c.model, c.suggest, c.plan) != (down(s.n_direct), down(s.n_world), up(s.n_suggest), up(s.n_plan)) {
            problems.push(format!("counts at epoch {epoch}: {c:?}"));
        }
    }

    let config = DqnConfig { hidden: vec![32, 32], ..DqnConfig::default() };
    for (scenario, seed) in [(Scenario::A, 1), (Scenario::D, 9)] {
        let t = scenario.topology(3).unwrap();
        let mut env = Environment::with_defaults();
        env.reset(t.clone(), seed).unwrap();
        let mut h = HybridAgent::<f64>::new(config.clone(), s.direct_only(), env.layout().unwrap(), seed).unwrap();
        let mut log_h = TrainingLog::new();
        hybrid_train(&mut h, &mut env, AccuracyConstraint::P85, EQUIVALENCE_STEPS, &mut NoMonitor, &mut log_h).unwrap();

        let mut env = Environment::with_defaults();
        env.reset(t, seed).unwrap();
        let mut d = DqnAgent::<f64>::new(config.clone(), env.layout().unwrap(), seed).unwrap();
        let mut log_d = TrainingLog::new();
        dqn_train(&mut d, &mut env, AccuracyConstraint::P85, EQUIVALENCE_STEPS, &mut NoMonitor, &mut log_d).unwrap();

        let rewards_h: Vec<u64> = log_h.rewards().map(f64::to_bits).collect();
        let rewards_d: Vec<u64> = log_d.rewards().map(f64::to_bits).collect();
        if h.dqn.checkpoint() != d.checkpoint() || rewards_h != rewards_d || log_h.step_times != log_d.step_times {
            problems.push(format!("{scenario}: direct-only hybrid diverges from the baseline"));
        }
    }

    // full hybrid: every real step is a direct step or a novel-action probe
    let t = Scenario::B.topology(3).unwrap();
    let mut env = Environment::with_defaults();
    env.reset(t, 4).unwrap();
    let mut h = HybridAgent::<f64>::new(config, HybridSchedule::default(), env.layout().unwrap(), 4).unwrap();
    let mut log = TrainingLog::new();
    hybrid_train(&mut h, &mut env, AccuracyConstraint::P80, EQUIVALENCE_STEPS, &mut NoMonitor, &mut log).unwrap();
    let accounted = log.real_env_steps == env.step_count()
        && log.real_env_steps == log.direct_steps + log.probe_steps
        && log.probe_steps == h.plan.len() as u64
        && log.model_updates > 0;
    if !accounted {
        problems.push(format!(
            "accounting: log {} env {} direct {} probes {} plan slots {}",
            log.real_env_steps,
            env.step_count(),
            log.direct_steps,
            log.probe_steps,
            h.plan.len()
        ));
    }
    let ok = problems.is_empty();
    line(
        7,
        ok,
        if ok {
            format!(
                "alpha and session counts exact for {} epochs; direct-only hybrid bit-identical to the baseline; {} real steps = {} direct + {} probes",
                3 * n,
                log.real_env_steps,
                log.direct_steps,
                log.probe_steps
            )
        } else {
            problems.join("; ")
        },
    )
}

fn criterion_8() -> Line {
    let config = MatrixConfig {
        users: vec![3],
        scenarios: vec![Scenario::A, Scenario::C],
        constraints: vec![AccuracyConstraint::Min, AccuracyConstraint::P85],
        agents: AgentKind::ALL.to_vec(),
        seeds: vec![1, 2],
        budget: Some(2_000),
        ..MatrixConfig::default()
    };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let report = run_matrix(&config).unwrap();
        let files = write_matrix_outputs(&report, dir.path()).unwrap();
        let mut bytes: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect();
        bytes.sort();
        bytes
    };
    let (a, b) = (run(), run());
    let ok = a == b && !a.is_empty();
    line(8, ok, format!("{} report files byte-identical across two runs", a.len()))
}

#[test]
fn reference_catalog_matches_model_order() {
    let catalog = Catalog::default();
    for (i, m) in catalog.models().iter().enumerate() {
        assert_eq!(m.id, ModelId::new(i).unwrap());
    }
    assert_eq!(REFERENCE_CATALOG.iter().filter(|r| r.1 == Precision::Int8).count(), 4);
}
