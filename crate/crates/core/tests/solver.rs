mod common;

use mfg_nash::game::Strategy;
use mfg_nash::measure::{EmpiricalMeasure, MeasureFlow};
use mfg_nash::models;
use mfg_nash::sde::{SeedRecord, TimeGrid};
use mfg_nash::solver::{
    damp, estimate_mfg_cost, enforce_lipschitz_cap, lipschitz_estimate, push_forward, read_flow_binary, solve_hjb,
    write_flow_binary, write_flow_summary, FeedbackPolicy, PolicyVariant, SpaceGrid,
};
use mfg_nash::Error;
use proptest::prelude::*;

fn toy() -> mfg_nash::sde::ModelSpec {
    models::toy_interbank(0.4, 1.0, 0.5, 0.3, 1.0, 0.3).unwrap()
}

fn point_flow(steps: usize, atoms: Vec<f64>) -> MeasureFlow {
    MeasureFlow::constant(TimeGrid::new(1.0, steps).unwrap(), EmpiricalMeasure::from_unsorted(atoms).unwrap())
}

/// Largest relative error of the lattice value at t = 0 against the
/// Riccati solution over the nodes with |x| <= 2.
fn lq_error(steps: usize, nodes: usize) -> f64 {
    let (kappa, sigma) = (1.0, 0.5);
    let spec = models::lq_riccati(kappa, sigma, 0.5).unwrap();
    let flow = point_flow(steps, vec![0.0]);
    let space = SpaceGrid::new(-6.0, 6.0, nodes).unwrap();
    let sol = solve_hjb(&spec, &flow, &space, 3).unwrap();
    let exact = models::lq_value_at_zero(kappa, sigma, 1.0, 2000);
    sol.value
        .layer(0)
        .iter()
        .enumerate()
        .map(|(j, v)| (space.node(j), v))
        .filter(|(x, _)| x.abs() <= 2.0)
        .map(|(x, v)| (v - exact(x)).abs() / exact(x))
        .fold(0.0, f64::max)
}

#[test]
fn lq_value_tracks_the_riccati_solution() {
    let coarse = lq_error(100, 121);
    let fine = lq_error(200, 171);
    assert!(coarse < 0.01, "{coarse}");
    let ratio = fine / coarse;
    assert!((0.35..=0.65).contains(&ratio), "{fine} / {coarse}");
}

#[test]
fn cfl_violation_is_a_config_error() {
    let spec = models::lq_riccati(1.0, 2.0, 0.5).unwrap();
    let flow = point_flow(10, vec![0.0]);
    let space = SpaceGrid::new(-5.0, 5.0, 401).unwrap();
    assert!(matches!(solve_hjb(&spec, &flow, &space, 3), Err(Error::Config(_))));
}

#[test]
fn larger_terminal_cost_gives_larger_value() {
    let spec = toy();
    let flow = point_flow(50, vec![-0.3, 0.0, 0.6]);
    let space = SpaceGrid::new(-4.0, 4.0, 81).unwrap();
    let low = solve_hjb(&spec, &flow, &space, 17).unwrap();
    let high_spec = spec.with_terminal_cost(|x, mu| 0.15 * (x - mu.mean()).powi(2) + 0.1 * x.cos() + 0.2);
    let high = solve_hjb(&high_spec, &flow, &space, 17).unwrap();
    for k in 0..=50 {
        for (a, b) in low.value.layer(k).iter().zip(high.value.layer(k)) {
            assert!(a <= b, "layer {k}: {a} > {b}");
        }
    }
    // a constant added at the end comes through unchanged
    let shifted = solve_hjb(&spec.with_terminal_cost(|x, mu| 0.15 * (x - mu.mean()).powi(2) + 1.0), &flow, &space, 17)
        .unwrap();
    for (a, b) in low.value.layer(0).iter().zip(shifted.value.layer(0)) {
        assert!((b - a - 1.0).abs() < 1e-9);
    }
}

#[test]
fn best_response_beats_constant_actions_against_its_flow() {
    let spec = toy();
    let flow = point_flow(50, vec![-0.4, -0.1, 0.2, 0.8]);
    let space = SpaceGrid::new(-4.0, 4.0, 81).unwrap();
    let sol = solve_hjb(&spec, &flow, &space, 33).unwrap();
    let best = estimate_mfg_cost(&spec, &Strategy::feedback(sol.policy), &flow, 20_000, 5).unwrap();
    for a in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let c = estimate_mfg_cost(&spec, &Strategy::Constant(a), &flow, 20_000, 5).unwrap();
        assert!(best.mean <= c.mean + 3.0 * best.combined_stderr(&c), "constant {a}: {} vs {}", c.mean, best.mean);
    }
}

#[test]
fn decoupled_model_is_solved_at_the_first_iteration() {
    let s = common::solve(&common::small("decoupled"));
    assert!(s.report.converged);
    assert_eq!(s.report.iterations, 1);
    assert_eq!(s.report.gaps, vec![0.0]);
}

#[test]
fn zero_tolerance_never_converges() {
    let mut cfg = common::small("toy-interbank");
    cfg.solver.tol = 0.0;
    cfg.solver.max_iter = 3;
    let s = common::solve(&cfg);
    assert!(!s.report.converged);
    assert_eq!(s.report.iterations, 3);
    let best = s.report.gaps.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(s.report.gaps[s.report.selected_iteration - 1], best);
}

#[test]
fn toy_fixed_point_is_reproducible() {
    let a = common::solve(&common::small_toy());
    let b = common::solve(&common::small_toy());
    assert!(a.report.converged);
    assert_eq!(a.report, b.report);
    assert_eq!(a.policy.table(), b.policy.table());
    assert_eq!(a.flow, b.flow);
}

#[test]
fn artifacts_round_trip() {
    let s = common::solve(&common::small_toy());
    let mut bin = Vec::new();
    write_flow_binary(&s.flow, &mut bin).unwrap();
    assert_eq!(read_flow_binary(bin.as_slice()).unwrap(), s.flow);
    assert!(read_flow_binary(&bin[..bin.len() - 3]).is_err());
    assert!(read_flow_binary(&b"NOTAFLOW........"[..]).is_err());

    let mut csv = Vec::new();
    s.policy.write_csv(&mut csv).unwrap();
    let back = FeedbackPolicy::read_csv(csv.as_slice(), *s.spec.actions()).unwrap();
    assert_eq!(back.table(), s.policy.table());

    let mut summary = Vec::new();
    write_flow_summary(&s.flow, &mut summary).unwrap();
    let text = String::from_utf8(summary).unwrap();
    assert!(text.starts_with("k,t,mean,variance,min,max\n"));
    assert_eq!(text.lines().count(), s.flow.grid().steps() + 2);
}

#[test]
fn lipschitz_cap_smooths_once() {
    let t = TimeGrid::new(1.0, 4).unwrap();
    let s = SpaceGrid::new(-1.0, 1.0, 21).unwrap();
    let a = *toy().actions();
    let rough = FeedbackPolicy::from_fn(t, s, a, |_, x| if x < 0.0 { -1.0 } else { 1.0 });
    let l = lipschitz_estimate(&rough);
    assert!((l - 20.0).abs() < 1e-9);
    let (kept, lk) = enforce_lipschitz_cap(rough.clone(), 25.0);
    assert_eq!(kept.variant(), PolicyVariant::Raw);
    assert_eq!(lk, l);
    let (smooth, ls) = enforce_lipschitz_cap(rough, 5.0);
    assert_eq!(smooth.variant(), PolicyVariant::Smoothed);
    assert!(ls < l);
}

#[test]
fn damping_mixes_order_statistics() {
    let a = point_flow(2, (0..8).map(f64::from).collect());
    let b = point_flow(2, (100..108).map(f64::from).collect());
    let d = damp(&a, &b, 0.25).unwrap();
    assert_eq!(d.at(1).atoms(), &[0.0, 2.0, 3.0, 4.0, 6.0, 7.0, 102.0, 106.0]);
    assert_eq!(damp(&a, &b, 1.0).unwrap(), b);
    assert!(damp(&a, &b, 0.0).is_err());
}

#[test]
fn push_forward_is_keyed_by_particle() {
    let spec = toy();
    let flow = point_flow(10, vec![0.0]);
    let policy = FeedbackPolicy::constant(flow.grid().clone(), SpaceGrid::new(-4.0, 4.0, 41).unwrap(), 0.0, *spec.actions())
        .unwrap();
    let a = push_forward(&spec, &policy, &flow, 1000, SeedRecord::new(2, 0, 0)).unwrap();
    let b = push_forward(&spec, &policy, &flow, 1000, SeedRecord::new(2, 0, 0)).unwrap();
    assert_eq!(a, b);
    let c = push_forward(&spec, &policy, &flow, 1000, SeedRecord::new(3, 0, 0)).unwrap();
    assert_ne!(a, c);
    assert!(push_forward(&spec, &policy, &flow, 10, SeedRecord::new(2, 0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn best_responses_are_admissible(atoms in prop::collection::vec(-2.0f64..2.0, 1..30), herd in 0.05f64..2.0) {
        let spec = models::toy_interbank(0.4, 1.0, 0.5, 0.3, 1.0, herd).unwrap();
        let flow = point_flow(50, atoms);
        let space = SpaceGrid::new(-4.0, 4.0, 81).unwrap();
        let sol = solve_hjb(&spec, &flow, &space, 9).unwrap();
        prop_assert!(sol.policy.table().iter().all(|a| spec.actions().contains(*a)));
        for k in 0..=50 {
            prop_assert!(sol.value.layer(k).iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
