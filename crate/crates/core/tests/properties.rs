use dynaorch::agents::{argmin, select_action, session_counts, HybridSchedule};
use dynaorch::approx::{max_gradient_error, AdamConfig, AdamState, Mlp, PrioritizedBuffer, Sample, Supervision, Transition, UniformBuffer};
use dynaorch::catalog::{average_accuracy, AccuracyConstraint, Catalog, ModelId, Precision};
use dynaorch::oracle::{JointConfiguration, Oracle};
use dynaorch::simenv::{
    Environment, LatencyModel, LinkQuality, NodeLoad, OrchestrationAction, ResourceState, SimConfig, SimDuration,
    Target, Topology, ACTION_COUNT, CPU_LEVELS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn link() -> impl Strategy<Value = LinkQuality> {
    prop_oneof![Just(LinkQuality::Regular), Just(LinkQuality::Weak)]
}

fn topology(max_devices: usize) -> impl Strategy<Value = Topology> {
    (prop::collection::vec(link(), 1..=max_devices), link()).prop_map(|(d, e)| Topology::new(d, e).unwrap())
}

fn action() -> impl Strategy<Value = OrchestrationAction> {
    (0..ACTION_COUNT).prop_map(|i| OrchestrationAction::from_index(i).unwrap())
}

fn flip(q: LinkQuality) -> LinkQuality {
    match q {
        LinkQuality::Regular => LinkQuality::Weak,
        LinkQuality::Weak => LinkQuality::Regular,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_accuracy_is_a_bounded_symmetric_mean(ids in prop::collection::vec(0usize..8, 1..10), seed in any::<u64>()) {
        let cat = Catalog::default();
        let picked: Vec<_> = ids.iter().map(|&i| cat.models()[i].clone()).collect();
        let aa = average_accuracy(&picked).unwrap();
        let mut shuffled = picked.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(aa, average_accuracy(&shuffled).unwrap());
        let lo = picked.iter().map(|m| m.accuracy.percent()).fold(f64::INFINITY, f64::min);
        let hi = picked.iter().map(|m| m.accuracy.percent()).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= aa && aa <= hi);
    }

    #[test]
    fn copies_of_one_model_average_to_its_accuracy(i in 0usize..8, n in 1usize..12) {
        let cat = Catalog::default();
        let m = cat.models()[i].clone();
        prop_assert_eq!(average_accuracy(&vec![m.clone(); n]).unwrap(), m.accuracy.percent());
    }

    #[test]
    fn environment_is_deterministic(t in topology(5), seed in any::<u64>(), actions in prop::collection::vec(action(), 1..60)) {
        let run = || {
            let mut env = Environment::with_defaults();
            env.reset(t.clone(), seed).unwrap();
            actions.iter().map(|&a| env.step(a, AccuracyConstraint::P85).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.reward.to_bits(), y.reward.to_bits());
            prop_assert_eq!(x.response_time, y.response_time);
            prop_assert_eq!(&x.next_observation, &y.next_observation);
        }
    }

    #[test]
    fn response_time_grows_with_contention(t in topology(5), a in action(), jobs in 0usize..12, head_ms in 1u32..400) {
        let latency = LatencyModel::new(&SimConfig::default(), &Catalog::default());
        let at = |k: usize| {
            let mut s = ResourceState::idle(t.clone());
            let load = NodeLoad { active_jobs: k, resident_mem: 0, head_compute: SimDuration::from_ms(head_ms as f64) };
            match a.target {
                Target::Local => s.devices[0] = load,
                Target::Edge => s.edge = load,
                Target::Cloud => s.cloud = load,
            }
            latency.response_time(a, &s)
        };
        prop_assert!(at(jobs) <= at(jobs + 1));
    }

    #[test]
    fn weak_links_add_twenty_ms_per_traversal(t in topology(5), a in action(), who in 0usize..5, edge in any::<bool>()) {
        let config = SimConfig::default();
        let latency = LatencyModel::new(&config, &Catalog::default());
        let mut s = ResourceState::idle(t.clone());
        s.round_index = who % t.n_devices();
        let mut flipped = s.clone();
        let (was_weak, traversals) = if edge {
            flipped.topology.edge_link = flip(t.edge_link);
            (t.edge_link.is_weak(), if a.target == Target::Cloud { 2 } else { 0 })
        } else {
            let q = t.device_links[s.round_index];
            flipped.topology.device_links[s.round_index] = flip(q);
            (q.is_weak(), if a.target == Target::Local { 0 } else { 2 })
        };
        let before = latency.response_time(a, &s).micros() as i64;
        let after = latency.response_time(a, &flipped).micros() as i64;
        let per = SimDuration::from_ms(20.0).micros() as i64;
        let sign = if was_weak { -1 } else { 1 };
        prop_assert_eq!(after - before, sign * traversals * per);
    }

    #[test]
    fn observations_stay_in_their_domains(t in topology(5), seed in any::<u64>(), actions in prop::collection::vec(action(), 0..80)) {
        let mut env = Environment::with_defaults();
        let mut obs = env.reset(t.clone(), seed).unwrap();
        let check = |o: &dynaorch::simenv::Observation| {
            assert_eq!(o.devices.len(), t.n_devices());
            assert!(o.edge.cpu_level < CPU_LEVELS && o.cloud.cpu_level < CPU_LEVELS);
            assert!(o.requester.is_none());
            for (d, q) in o.devices.iter().zip(&t.device_links) {
                assert_eq!(d.link_weak, q.is_weak());
            }
        };
        check(&obs);
        for a in actions {
            obs = env.step(a, AccuracyConstraint::Min).unwrap().next_observation;
            check(&obs);
        }
    }

    #[test]
    fn window_art_is_the_mean_of_the_last_n(t in topology(5), seed in any::<u64>(), actions in prop::collection::vec(action(), 5..50)) {
        let n = t.n_devices();
        let mut env = Environment::with_defaults();
        env.reset(t, seed).unwrap();
        let mut times = Vec::new();
        for a in actions {
            let out = env.step(a, AccuracyConstraint::Min).unwrap();
            times.push(out.response_time.micros());
            if times.len() >= n {
                let sum: u64 = times[times.len() - n..].iter().sum();
                prop_assert_eq!(out.window_art, sum as f64 / n as f64 / 1000.0);
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences(
        sizes in prop::collection::vec(1usize..=16, 2..=4),
        seed in any::<u64>(),
        batch in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        // random biases too: zero biases behind a dead unit put later units exactly on the kink
        let mut net: Mlp<f64> = Mlp::zeros(&sizes).unwrap();
        net.params_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ts: Vec<Vec<f64>> = (0..batch).map(|_| (0..*sizes.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let samples: Vec<Sample<'_, f64>> = xs.iter().zip(&ts).map(|(x, t)| Sample { input: x, target: Supervision::All(t), weight: 1.0 }).collect();
        prop_assert!(max_gradient_error(&net, &samples, 1e-5, 1e-6).unwrap() < 1e-4);
    }

    #[test]
    fn buffers_respect_capacity_and_keep_what_they_hold(capacity in 1usize..20, pushes in 0usize..60) {
        let mut uniform: UniformBuffer<f64> = UniformBuffer::new(capacity);
        let mut prio: PrioritizedBuffer<f64> = PrioritizedBuffer::new(capacity, 0.6, 1e-3);
        let make = |i: usize| Transition { state: vec![i as f64], action: i % ACTION_COUNT, cost: i as f64 * 0.5, next_state: vec![i as f64 + 1.0] };
        for i in 0..pushes {
            uniform.push(make(i));
            prio.push(make(i));
            prop_assert!(uniform.len() <= capacity && prio.len() <= capacity);
        }
        prop_assert_eq!(uniform.len(), pushes.min(capacity));
        // the survivors are exactly the most recent pushes, stored verbatim
        let mut kept: Vec<usize> = uniform.iter().map(|t| t.state[0] as usize).collect();
        kept.sort_unstable();
        let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(&kept, &expected);
        for t in uniform.iter().chain(prio.iter()) {
            prop_assert_eq!(t, &make(t.state[0] as usize));
        }
    }

    #[test]
    fn weakening_a_link_never_helps_the_optimum(t in topology(3), which in 0usize..4, c in 0usize..5) {
        let oracle = Oracle::new(SimConfig::default(), Catalog::default());
        let constraint = AccuracyConstraint::ALL[c];
        let mut weaker = t.clone();
        if which < t.n_devices() {
            weaker.device_links[which] = LinkQuality::Weak;
        } else {
            weaker.edge_link = LinkQuality::Weak;
        }
        let base = oracle.optimal_configuration(&t, constraint).unwrap();
        let worse = oracle.optimal_configuration(&weaker, constraint).unwrap();
        prop_assert!(worse.art_ms >= base.art_ms);
    }

    #[test]
    fn session_counts_follow_the_rounded_formulas(
        n_epochs in 1u64..80,
        epoch in 1u64..200,
        bases in prop::array::uniform4(0usize..300),
    ) {
        let s = HybridSchedule {
            n_epochs,
            n_direct: bases[0],
            n_world: bases[1],
            n_suggest: bases[2],
            n_plan: bases[3],
            ..HybridSchedule::default()
        };
        let e = epoch.min(n_epochs);
        // half-up rounding of base * num / (2 n), never below one when base > 0
        let r = |base: usize, num: u64| {
            if base == 0 { return 0; }
            let (p, q) = (base as u64 * num, 2 * n_epochs);
            (((2 * p + q) / (2 * q)) as usize).max(1)
        };
        let c = session_counts(&s, epoch);
        prop_assert_eq!(c.direct, r(bases[0], 2 * n_epochs - e));
        prop_assert_eq!(c.model, r(bases[1], 2 * n_epochs - e));
        prop_assert_eq!(c.suggest, r(bases[2], n_epochs + e));
        prop_assert_eq!(c.plan, r(bases[3], n_epochs + e));
        prop_assert_eq!(s.alpha(epoch), e as f64 / n_epochs as f64);
    }

    #[test]
    fn greedy_selection_is_the_argmin(values in prop::collection::vec(-1e3f64..1e3, ACTION_COUNT), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = select_action(&values, 0.0, &mut rng);
        prop_assert!(values.iter().all(|&v| values[a] <= v));
        prop_assert_eq!(a, argmin(&values));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimum_beats_random_configurations(t in topology(3), c in 0usize..5, ranks in prop::collection::vec(0u64..1000, 100)) {
        let mut oracle = Oracle::new(SimConfig::default(), Catalog::default());
        let constraint = AccuracyConstraint::ALL[c];
        let best = oracle.optimal_configuration(&t, constraint).unwrap();
        let n = t.n_devices();
        let space = (ACTION_COUNT as u64).pow(n as u32);
        for r in ranks {
            let config = JointConfiguration::from_rank(r % space, n);
            if !config.feasible(oracle.catalog(), constraint) {
                continue;
            }
            let e = oracle.evaluate(&config, &t).unwrap();
            prop_assert!(best.art_ms <= e.art_ms);
        }
    }
}

#[test]
fn larger_models_take_longer_on_an_idle_node() {
    let latency = LatencyModel::new(&SimConfig::default(), &Catalog::default());
    let cat = Catalog::default();
    let s = ResourceState::idle(Topology::uniform(3, LinkQuality::Regular).unwrap());
    for precision in [Precision::Fp32, Precision::Int8] {
        let mut models: Vec<_> = cat.models().iter().filter(|m| m.precision == precision).collect();
        models.sort_by_key(|m| m.macs);
        let times: Vec<_> = models.iter().map(|m| latency.response_time(OrchestrationAction::local(m.id), &s)).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]), "{precision:?}: {times:?}");
    }
}

#[test]
fn adam_minimizes_a_parabola() {
    // f(theta) = theta^2 as a single linear unit with zero input and the bias as theta:
    // loss (b - 0)^2 has gradient 2b, which is what backward reports.
    let mut net: Mlp<f64> = Mlp::zeros(&[1, 1]).unwrap();
    net.layers_mut()[0].bias[0] = 1.0;
    let mut adam = AdamState::new(&net, AdamConfig { lr: 1e-2, ..AdamConfig::default() });
    let x = [0.0];
    let t = [0.0];
    for _ in 0..2000 {
        let (g, _) = net.backward(&[Sample { input: &x, target: Supervision::All(&t), weight: 1.0 }]).unwrap();
        adam.update(&mut net, &g).unwrap();
    }
    assert!(net.layers()[0].bias[0].abs() < 1e-2, "{}", net.layers()[0].bias[0]);
}

#[test]
fn model_ids_round_trip_through_actions() {
    for m in ModelId::all() {
        let a = OrchestrationAction::local(m);
        assert_eq!(OrchestrationAction::from_index(a.index()), Some(a));
    }
}
