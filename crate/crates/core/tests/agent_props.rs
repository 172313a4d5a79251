mod common;

use common::{count_ranks, pearson_two_pass, rng};
use drillguide::agent::{agent_step, run_trial, Acuity, AgentParams, AgentState, TrialKey};
use drillguide::geometry::{compute_error, Pose};
use drillguide::harness::{generate_targets, StartSpec, TargetRegion};
use drillguide::rng::derive_seed;
use drillguide::widget::{build_frame, Condition, WidgetConfig};

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson_two_pass(&count_ranks(x), &count_ranks(y))
}

fn finite_state(s: &AgentState) -> bool {
    let q = s.tool.orientation.to_array();
    s.tool.position.is_finite()
        && q.iter().all(|v| v.is_finite())
        && s.perceived_error.pe_vec.is_finite()
        && s.perceived_error.pm.is_finite()
        && s.perceived_error.rm.is_finite()
        && s.perception_noise.iter().all(|v| v.is_finite())
        && s.elapsed.is_finite()
}

/// `(target, start)` for trial `i` of a seeded stream.
fn scenario(seed: u64, i: u64, start: &StartSpec) -> (Pose, Pose) {
    let mut r = rng(derive_seed(seed, &[i]));
    let target = generate_targets(&TargetRegion::default(), 1, &mut r)[0];
    let start_pose = start.sample(&target, &mut r);
    (target, start_pose)
}

#[test]
fn a_million_steps_stay_finite() {
    let cfg = WidgetConfig::default();
    let params = AgentParams::default();
    let spec = StartSpec { max_distance: 150.0, max_angle_deg: 120.0, ..StartSpec::default() };
    let mut r = rng(7);
    let mut episode = 0u64;
    let (mut target, start) = scenario(11, episode, &spec);
    let mut state = AgentState::new(start, &mut r);
    let mut condition = Condition::ALL[0];
    for step in 0..1_000_000u32 {
        let frame = build_frame(&state.tool, &target, condition, &cfg);
        let err = compute_error(&state.tool, &target);
        let (next, _) = agent_step(&state, &frame, &err, &params, &mut r);
        assert!(finite_state(&next), "non-finite state at step {step}");
        state = next;
        if state.done || state.elapsed > 30.0 {
            episode += 1;
            condition = Condition::ALL[(episode % 4) as usize];
            let (t, s) = scenario(11, episode, &spec);
            target = t;
            state = AgentState::new(s, &mut r);
        }
    }
    assert!(episode > 100);
}

#[test]
fn unseen_position_makes_final_error_independent_of_start() {
    let cfg = WidgetConfig::default();
    let mut params = AgentParams::default();
    params.perception.insert(Condition::Dwta, Acuity { pos: f64::INFINITY, rot: 1.0 });
    let spec = StartSpec { min_distance: 5.0, max_distance: 80.0, ..StartSpec::default() };
    let (mut initial, mut last) = (Vec::new(), Vec::new());
    for seed in 0..200u64 {
        let (target, start) = scenario(500, seed, &spec);
        let p = AgentParams { seed: derive_seed(501, &[seed]), ..params.clone() };
        let key = TrialKey { subject: 0, condition: Condition::Dwta, trial: seed as u32 };
        let rec = run_trial(key, &target, &start, &p, &cfg, 120.0);
        initial.push(compute_error(&start, &target).pm);
        last.push(rec.error.pm);
    }
    let rho = spearman(&initial, &last);
    assert!(rho.abs() < 0.1, "rank correlation {rho}");
}

#[test]
fn visible_position_keeps_final_error_small() {
    let cfg = WidgetConfig::default();
    let params = AgentParams::default();
    let spec = StartSpec::default();
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let (target, start) = scenario(500, seed, &spec);
        let p = AgentParams { seed, ..params.clone() };
        let key = TrialKey { subject: 0, condition: Condition::Dwta, trial: 0 };
        worst = worst.max(run_trial(key, &target, &start, &p, &cfg, 120.0).error.pm);
    }
    assert!(worst < 5.0, "{worst}");
}

#[test]
fn dynamic_target_axis_beats_entry_point_in_rotation() {
    let cfg = WidgetConfig::default();
    let params = AgentParams::default();
    let spec = StartSpec::default();
    let mut sums = [0.0; 2];
    for seed in 0..100u64 {
        let (target, start) = scenario(900, seed, &spec);
        for (i, condition) in [Condition::Dwta, Condition::EntryPoint].into_iter().enumerate() {
            let p = AgentParams { seed: derive_seed(901, &[seed, i as u64]), ..params.clone() };
            let key = TrialKey { subject: 0, condition, trial: seed as u32 };
            sums[i] += run_trial(key, &target, &start, &p, &cfg, 120.0).error.rm;
        }
    }
    let (dwta, ep) = (sums[0] / 100.0, sums[1] / 100.0);
    assert!(dwta < ep, "mean rm DWTA {dwta} vs EntryPoint {ep}");
}

#[test]
fn same_seed_same_record() {
    let cfg = WidgetConfig::default();
    let (target, start) = scenario(3, 3, &StartSpec::default());
    let p = AgentParams { seed: 99, ..AgentParams::default() };
    for condition in Condition::ALL {
        let key = TrialKey { subject: 2, condition, trial: 5 };
        assert_eq!(run_trial(key, &target, &start, &p, &cfg, 120.0), run_trial(key, &target, &start, &p, &cfg, 120.0));
    }
}
