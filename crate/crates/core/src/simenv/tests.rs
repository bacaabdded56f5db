use super::*;
use crate::catalog::{AccuracyConstraint, ModelId};

fn m(i: usize) -> ModelId {
    ModelId::new(i).unwrap()
}

fn env_for(scenario: Scenario, n: usize) -> Environment {
    let mut env = Environment::with_defaults();
    env.reset(scenario.topology(n).unwrap(), 7).unwrap();
    env
}

#[test]
fn reset_observations_follow_links() {
    let mut env = Environment::with_defaults();
    let a = env.reset(Scenario::A.topology(5).unwrap(), 7).unwrap();
    assert!(a.devices.iter().all(|d| !d.cpu_busy && !d.mem_busy && !d.link_weak));
    assert_eq!((a.edge.cpu_level, a.cloud.cpu_level), (0, 0));
    assert!(!a.edge.link_weak && !a.cloud.link_weak);

    let d = env.reset(Scenario::D.topology(5).unwrap(), 7).unwrap();
    assert!(d.devices.iter().all(|d| d.link_weak));
    assert!(d.edge.link_weak && d.cloud.link_weak);

    let b = env.reset(Scenario::B.topology(5).unwrap(), 7).unwrap();
    assert!(!b.devices[0].link_weak);
    assert!(b.devices[1].link_weak);
}

#[test]
fn step_before_reset_is_a_lifecycle_error() {
    let mut env = Environment::with_defaults();
    let err = env.step(OrchestrationAction::local(m(7)), AccuracyConstraint::Min);
    assert_eq!(err.unwrap_err(), EnvError::NotReset);
}

#[test]
fn local_d7_hits_the_anchor() {
    let env = env_for(Scenario::A, 5);
    let state = env.resource_state().unwrap();
    let rt = env.latency().response_time(OrchestrationAction::local(m(7)), &state);
    assert!((rt.as_ms() - 72.0).abs() <= 1.0, "{rt}");
}

#[test]
fn weak_device_link_costs_forty_ms_on_edge() {
    let mut reg = ResourceState::idle(Scenario::A.topology(1).unwrap());
    let mut weak = reg.clone();
    weak.topology.device_links[0] = LinkQuality::Weak;
    reg.round_index = 0;
    let env = Environment::with_defaults();
    let lat = env.latency();
    let diff = lat.response_time(OrchestrationAction::EDGE, &weak)
        - lat.response_time(OrchestrationAction::EDGE, &reg);
    assert_eq!(diff, SimDuration::from_ms(40.0));
}

#[test]
fn compute_ratio_is_linear_in_macs() {
    let env = Environment::with_defaults();
    let lat = env.latency();
    let ratio = |a: usize, b: usize| {
        lat.compute(Tier::End, m(a)).as_ms() / lat.compute(Tier::End, m(b)).as_ms()
    };
    // same precision class: pure MAC ratio, up to microsecond rounding
    assert!((ratio(7, 4) - 41.0 / 569.0).abs() < 1e-5);
    assert!((ratio(3, 0) - 41.0 / 569.0).abs() < 1e-5);
    // across precision classes the Int8 speed-up also enters
    assert!((ratio(7, 0) - 41.0 / 569.0 / 1.6).abs() < 1e-5);
}

#[test]
fn min_constraint_never_violates() {
    let mut env = env_for(Scenario::A, 5);
    let out = env.step(OrchestrationAction::local(m(7)), AccuracyConstraint::Min).unwrap();
    assert!(!out.violated);
    assert_eq!(out.reward, out.response_time.as_ms());
}

#[test]
fn edge_level_rises_across_a_round() {
    let mut env = env_for(Scenario::A, 5);
    let mut last = env.observation().unwrap().edge.cpu_level;
    for _ in 0..5 {
        let out = env.step(OrchestrationAction::EDGE, AccuracyConstraint::Min).unwrap();
        assert!(out.next_observation.edge.cpu_level >= last);
        last = out.next_observation.edge.cpu_level;
    }
    assert!(last > 0);
}

#[test]
fn max_constraint_with_int8_d4_violates() {
    let mut env = env_for(Scenario::A, 5);
    for _ in 0..5 {
        let out = env.step(OrchestrationAction::local(m(4)), AccuracyConstraint::Max).unwrap();
        assert!(out.violated);
        assert!((out.window_aa - 88.9).abs() < 1e-9);
        assert_eq!(out.reward, out.window_art + 1000.0);
    }
}

#[test]
fn reward_examples() {
    assert_eq!(reward(100.0, 85.06, AccuracyConstraint::P85, 1000.0), 100.0);
    assert_eq!(reward(100.0, 84.9, AccuracyConstraint::P85, 1000.0), 1100.0);
    assert_eq!(reward(42.5, 10.0, AccuracyConstraint::Min, 1000.0), 42.5);
}

#[test]
fn encode_state_buckets_edge_jobs() {
    let config = SimConfig::default();
    let mut state = ResourceState::idle(Scenario::A.topology(3).unwrap());
    assert_eq!(encode_state(&state, &config).edge.cpu_level, 0);
    state.edge.active_jobs = 3;
    assert_eq!(encode_state(&state, &config).edge.cpu_level, 3);
    state.edge.active_jobs = 12;
    assert_eq!(encode_state(&state, &config).edge.cpu_level, 8);
}

#[test]
fn memory_busy_on_end_device_only_for_fp32_d0() {
    let mut env = env_for(Scenario::A, 3);
    let out = env.step(OrchestrationAction::local(m(0)), AccuracyConstraint::Min).unwrap();
    assert!(out.next_observation.devices[0].mem_busy);
    let out = env.step(OrchestrationAction::EDGE, AccuracyConstraint::Min).unwrap();
    assert!(!out.next_observation.edge.mem_busy);
    let mut env = env_for(Scenario::A, 3);
    let out = env.step(OrchestrationAction::local(m(1)), AccuracyConstraint::Min).unwrap();
    assert!(!out.next_observation.devices[0].mem_busy);
}

#[test]
fn requester_of_next_step_sees_own_device_idle() {
    let mut env = env_for(Scenario::A, 3);
    for _ in 0..9 {
        let out = env.step(OrchestrationAction::local(m(7)), AccuracyConstraint::Min).unwrap();
        let next = env.round_index().unwrap();
        assert!(!out.next_observation.devices[next].cpu_busy);
    }
    let obs = env.observation().unwrap();
    assert_eq!(obs.devices.iter().filter(|d| d.cpu_busy).count(), 2);
}

#[test]
fn window_is_mean_of_last_n() {
    let mut env = env_for(Scenario::B, 3);
    let actions = [9usize, 8, 7, 0, 9, 9, 3, 8, 5, 2];
    let mut rts = Vec::new();
    for &a in &actions {
        let out = env
            .step(OrchestrationAction::from_index(a).unwrap(), AccuracyConstraint::P85)
            .unwrap();
        rts.push(out.response_time.micros());
        let last: Vec<u64> = rts.iter().rev().take(3).copied().collect();
        let mean = last.iter().sum::<u64>() as f64 / last.len() as f64 / 1000.0;
        assert_eq!(out.window_art, mean);
    }
}

#[test]
fn requester_flag_extends_the_observation() {
    let config = SimConfig { requester_index: true, ..SimConfig::default() };
    let mut env = Environment::new(config, crate::catalog::Catalog::default());
    let obs = env.reset(Scenario::A.topology(3).unwrap(), 1).unwrap();
    assert_eq!(obs.requester, Some(0));
    let out = env.step(OrchestrationAction::CLOUD, AccuracyConstraint::Min).unwrap();
    assert_eq!(out.next_observation.requester, Some(1));
    assert_eq!(env.layout().unwrap().len(), 3 * 3 + 6 + 3);
}

#[test]
fn trace_rows_are_recorded() {
    let mut env = Environment::with_defaults();
    env.enable_trace();
    env.reset(Scenario::A.topology(2).unwrap(), 3).unwrap();
    env.step(OrchestrationAction::CLOUD, AccuracyConstraint::Min).unwrap();
    env.step(OrchestrationAction::local(m(2)), AccuracyConstraint::Min).unwrap();
    let rows = env.trace().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].action, "d2,L");
    let mut buf = Vec::new();
    write_trace_csv(rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("step,device,action,response_time_ms,window_art,window_aa,violated\n"));
    assert!(text.contains("\"d0,C\""));
}
