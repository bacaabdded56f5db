use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{
    dqn_train, hybrid_train, session_counts, DqnAgent, DqnConfig, HybridAgent, HybridSchedule, NoMonitor, TrainingLog,
};
use crate::approx::{max_gradient_error, AdamConfig, AdamState, Gradients, Mlp, PrioritizedBuffer, Sample, Supervision, Transition};
use crate::catalog::{AccuracyConstraint, Catalog, ModelId, Precision};
use crate::oracle::Oracle;
use crate::simenv::{
    Environment, LatencyModel, LinkQuality, OrchestrationAction, ResourceState, Scenario, SimConfig, SimDuration,
    Topology,
};

/// Outcome of one invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> CheckOutcome {
        CheckOutcome { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// Runs the quick invariant suite. Every check is deterministic; the whole
/// suite takes a few seconds.
pub fn run_checks() -> Result<Vec<CheckOutcome>, HarnessError> {
    Ok(vec![
        check_catalog(),
        check_pareto()?,
        check_weak_links(),
        check_gradients()?,
        check_adam()?,
        check_prioritized_sampling()?,
        check_schedule(),
        check_baseline_equivalence()?,
    ])
}

/// MACs, precision and accuracy of the eight models, in order.
pub const REFERENCE_CATALOG: [(u32, Precision, f64); 8] = [
    (569, Precision::Fp32, 89.9),
    (317, Precision::Fp32, 88.2),
    (150, Precision::Fp32, 84.9),
    (41, Precision::Fp32, 74.2),
    (569, Precision::Int8, 88.9),
    (317, Precision::Int8, 87.0),
    (150, Precision::Int8, 83.2),
    (41, Precision::Int8, 72.8),
];

fn check_catalog() -> CheckOutcome {
    let catalog = Catalog::default();
    let bad: Vec<String> = catalog
        .models()
        .iter()
        .zip(REFERENCE_CATALOG)
        .filter(|(m, (macs, p, acc))| m.macs != *macs || m.precision != *p || (m.accuracy.percent() - acc).abs() > 1e-9)
        .map(|(m, _)| m.id.to_string())
        .collect();
    let ok = bad.is_empty() && catalog.models().len() == REFERENCE_CATALOG.len();
    CheckOutcome::new("catalog rows", ok, if ok { "8 rows match".to_string() } else { format!("mismatch: {bad:?}") })
}

fn check_pareto() -> Result<CheckOutcome, HarnessError> {
    let oracle = Oracle::new(SimConfig::default(), Catalog::default());
    let mut problems = Vec::new();
    for s in Scenario::ALL {
        let all = oracle.solve_all(&s.topology(3)?)?;
        if all.windows(2).any(|w| w[1].art_ms < w[0].art_ms) {
            problems.push(format!("{s}: optimum not monotone"));
        }
        for (e, c) in all.iter().zip(AccuracyConstraint::ALL) {
            let mean = e.config.average_accuracy(oracle.catalog());
            if (e.aa - mean).abs() > 0.01 || !e.config.feasible(oracle.catalog(), c) {
                problems.push(format!("{s} {c}: aa {:.2} vs mean {mean:.2}", e.aa));
            }
        }
    }
    let ok = problems.is_empty();
    Ok(CheckOutcome::new(
        "oracle monotone across constraints (3 devices)",
        ok,
        if ok { "4 scenarios".to_string() } else { problems.join("; ") },
    ))
}

fn check_weak_links() -> CheckOutcome {
    let config = SimConfig::default();
    let latency = LatencyModel::new(&config, &Catalog::default());
    let topo = |dev: LinkQuality, edge: LinkQuality| Topology::new(vec![dev; 3], edge).expect("valid topology");
    let rt = |t: Topology, a: OrchestrationAction| latency.response_time(a, &ResourceState::idle(t)).micros() as i64;
    let weak_us = SimDuration::from_ms(config.weak_delay_ms).micros() as i64;
    let (r, w) = (LinkQuality::Regular, LinkQuality::Weak);
    let mut problems = Vec::new();
    for m in ModelId::all() {
        let local = OrchestrationAction::local(m);
        let base = rt(topo(r, r), local);
        if rt(topo(w, w), local) != base {
            problems.push(format!("local {m} depends on links"));
        }
    }
    let edge = OrchestrationAction::EDGE;
    let cloud = OrchestrationAction::CLOUD;
    let cases = [
        ("edge via weak device link", rt(topo(w, r), edge) - rt(topo(r, r), edge), 2),
        ("edge ignores edge link", rt(topo(r, w), edge) - rt(topo(r, r), edge), 0),
        ("cloud via weak device link", rt(topo(w, r), cloud) - rt(topo(r, r), cloud), 2),
        ("cloud via weak edge link", rt(topo(r, w), cloud) - rt(topo(r, r), cloud), 2),
        ("cloud via both", rt(topo(w, w), cloud) - rt(topo(r, r), cloud), 4),
    ];
    for (name, diff, traversals) in cases {
        if diff != traversals * weak_us {
            problems.push(format!("{name}: {diff} us"));
        }
    }
    let ok = problems.is_empty();
    CheckOutcome::new("weak link adds a fixed delay per traversal", ok, problems.join("; "))
}

fn check_gradients() -> Result<CheckOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let depth = rng.gen_range(2..=4);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=16)).collect();
        // random biases keep every unit off the rectifier kink
        let mut net: Mlp<f64> = Mlp::zeros(&sizes).map_err(crate::agents::AgentError::from)?;
        net.params_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
        let inputs: Vec<Vec<f64>> = (0..3).map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<Vec<f64>> = (0..3).map(|_| (0..sizes[depth - 1]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let batch: Vec<Sample<'_, f64>> = inputs
            .iter()
            .zip(&targets)
            .map(|(x, t)| Sample { input: x, target: Supervision::All(t), weight: rng.gen_range(0.5..1.5) })
            .collect();
        worst = worst.max(max_gradient_error(&net, &batch, 1e-5, 1e-6).map_err(crate::agents::AgentError::from)?);
    }
    Ok(CheckOutcome::new("backprop agrees with finite differences", worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn check_adam() -> Result<CheckOutcome, HarnessError> {
    let mut net: Mlp<f64> = Mlp::zeros(&[1, 1]).map_err(crate::agents::AgentError::from)?;
    let mut grads = Gradients::zeros_like(&net);
    grads.layers[0].weights[0] = 1.0;
    let mut adam = AdamState::new(&net, AdamConfig::default());
    adam.update(&mut net, &grads).map_err(crate::agents::AgentError::from)?;
    let theta = net.layers()[0].weights[0];
    // lr * 1 / (1 + eps) with unit bias-corrected moments
    let expected = -1e-3 / (1.0 + 1e-8);
    let ok = (theta - expected).abs() < 1e-12;
    Ok(CheckOutcome::new("first Adam step", ok, format!("{theta:.12e}")))
}

fn check_prioritized_sampling() -> Result<CheckOutcome, HarnessError> {
    let mut buf: PrioritizedBuffer<f64> = PrioritizedBuffer::new(4, 0.6, 1e-3);
    for a in 0..4 {
        buf.push(Transition { state: vec![0.0], action: a, cost: 0.0, next_state: vec![0.0] });
    }
    buf.update_priorities(&[0, 1, 2, 3], &[0.1, 0.5, 1.0, 2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0u64; 4];
    let draws = 100_000;
    for _ in 0..draws {
        let s = buf.sample(1, 1.0, &mut rng).map_err(crate::agents::AgentError::from)?;
        counts[s.indices[0]] += 1;
    }
    let chi2: f64 = (0..4)
        .map(|i| {
            let e = buf.probability(i) * draws as f64;
            (counts[i] as f64 - e).powi(2) / e
        })
        .sum();
    // 95% quantile, 3 degrees of freedom
    Ok(CheckOutcome::new("prioritized sampling frequencies", chi2 < 7.815, format!("chi2 {chi2:.2}")))
}

fn check_schedule() -> CheckOutcome {
    let s = HybridSchedule::default();
    let round = |x: f64| ((x + 0.5).floor() as usize).max(1);
    let bad: Vec<u64> = (1..=2 * s.n_epochs)
        .filter(|&e| {
            let a = (e.min(s.n_epochs)) as f64 / s.n_epochs as f64;
            let c = session_counts(&s, e);
            c.direct != round((1.0 - a / 2.0) * s.n_direct as f64)
                || c.model != round((1.0 - a / 2.0) * s.n_world as f64)
                || c.suggest != round((a + 1.0) / 2.0 * s.n_suggest as f64)
                || c.plan != round((a + 1.0) / 2.0 * s.n_plan as f64)
                || s.alpha(e) != a
        })
        .collect();
    CheckOutcome::new("hybrid session counts", bad.is_empty(), format!("bad epochs: {bad:?}"))
}

fn check_baseline_equivalence() -> Result<CheckOutcome, HarnessError> {
    let topology = Scenario::B.topology(3)?;
    let config = DqnConfig { hidden: vec![16, 16], ..DqnConfig::default() };
    let budget = 1_000;

    let mut env = Environment::with_defaults();
    env.reset(topology.clone(), 5)?;
    let mut h = HybridAgent::<f64>::new(config.clone(), HybridSchedule::default().direct_only(), env.layout()?, 5)?;
    let mut log_h = TrainingLog::new();
    hybrid_train(&mut h, &mut env, AccuracyConstraint::P85, budget, &mut NoMonitor, &mut log_h)?;

    let mut env = Environment::with_defaults();
    env.reset(topology, 5)?;
    let mut d = DqnAgent::<f64>::new(config, env.layout()?, 5)?;
    let mut log_d = TrainingLog::new();
    dqn_train(&mut d, &mut env, AccuracyConstraint::P85, budget, &mut NoMonitor, &mut log_d)?;

    let ok = h.dqn.checkpoint() == d.checkpoint() && log_h.step_times == log_d.step_times;
    Ok(CheckOutcome::new("hybrid without planning equals the baseline", ok, format!("{budget} steps")))
}
