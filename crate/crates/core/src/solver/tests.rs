use std::time::Duration;

use approx::assert_abs_diff_eq;

use super::incumbent::inner_lp;
use super::relaxation::{groups, relax, NodeBox};
use super::*;
use crate::analysis::{instances, kkt_residuals, shortest_path_first, square_root_allocation};
use crate::formulation::QcqpInstance;

fn quick() -> SolverConfig {
    SolverConfig::default().with_time_limit(Duration::from_secs(20))
}

fn fleets_at(inst: &QcqpInstance, y: &[f64]) -> Vec<f64> {
    let mut v = inst.lower();
    for (&j, &val) in inst.y_vars.iter().zip(y) {
        v[j] = val;
    }
    v
}

#[test]
fn square_root_instance() {
    let inst = instances::independent_lines(&[1.0, 4.0, 9.0], 6.0).unwrap();
    let sol = solve(&inst, &quick()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let expect = square_root_allocation(&[1.0, 4.0, 9.0], 6.0).unwrap();
    for (a, b) in sol.fleets(&inst).iter().zip(&expect) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-3);
    }
    // 1/1 + 4/2 + 9/3 plus one minute of riding per passenger
    assert_abs_diff_eq!(sol.objective, 6.0 + 14.0, epsilon = 1e-6);
    assert!(sol.lower_bound <= sol.objective + 1e-9);
    let kkt = kkt_residuals(&inst, &sol.values).unwrap();
    assert!(kkt.max_residual() < 1e-6, "{kkt}");
}

#[test]
fn root_relaxation_is_a_lower_bound() {
    let inst = instances::independent_lines(&[1.0, 4.0, 9.0], 6.0).unwrap();
    let g = groups(&inst);
    let mut b = NodeBox::root(&inst);
    assert!(b.propagate(&inst));
    let r = relax(&inst, &g, &b).unwrap().unwrap();
    assert!(r.value <= 20.0 + 1e-9);
}

#[test]
fn fixed_inverse_makes_relaxation_exact() {
    let inst = instances::independent_lines(&[1.0, 4.0, 9.0], 6.0).unwrap();
    let g = groups(&inst);
    let y = [1.5, 2.0, 2.5];
    let mut b = NodeBox::root(&inst);
    for (c, &yv) in inst.couplings.iter().zip(&y) {
        b.lower[c.y] = yv;
        b.upper[c.y] = yv;
    }
    assert!(b.propagate(&inst));
    let r = relax(&inst, &g, &b).unwrap().unwrap();
    let exact = inner_lp(&inst, &fleets_at(&inst, &y)).unwrap().unwrap();
    assert_abs_diff_eq!(r.value, exact.objective, epsilon = 1e-7);
}

#[test]
fn shrinking_a_box_never_lowers_the_bound() {
    let inst = instances::independent_lines(&[1.0, 4.0, 9.0], 6.0).unwrap();
    let g = groups(&inst);
    let mut b = NodeBox::root(&inst);
    b.propagate(&inst);
    let mut last = relax(&inst, &g, &b).unwrap().unwrap().value;
    let u = inst.couplings[2].u;
    for hi in [50.0, 10.0, 1.0, 0.5, 0.4] {
        b.upper[u] = hi;
        b.propagate(&inst);
        let v = relax(&inst, &g, &b).unwrap().unwrap().value;
        assert!(v >= last - 1e-6 * last.abs(), "{v} < {last}");
        last = v;
    }
}

#[test]
fn branching_propagates_reciprocals() {
    let inst = instances::independent_lines(&[1.0, 4.0, 9.0], 6.0).unwrap();
    let c = inst.couplings[0];
    let mut b = NodeBox::root(&inst);
    b.lower[c.u] = 0.2;
    b.upper[c.u] = 0.5;
    b.propagate(&inst);
    assert_abs_diff_eq!(b.lower[c.y], 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.upper[c.y], 5.0, epsilon = 1e-12);
    let (l, r) = branch(&inst, &b, c.u, 0.35);
    assert_abs_diff_eq!(l.upper[c.u], 0.35, epsilon = 1e-12);
    assert_abs_diff_eq!(r.lower[c.u], 0.35, epsilon = 1e-12);
    assert_abs_diff_eq!(l.lower[c.y], 1.0 / 0.35, epsilon = 1e-12);
    // clamped into the middle of the box
    let (l, _) = branch(&inst, &b, c.u, 0.2);
    assert_abs_diff_eq!(l.upper[c.u], 0.23, epsilon = 1e-12);
}

#[test]
fn greedy_rule_on_parallel_lines() {
    let times = [10.0, 20.0, 30.0];
    let caps = [2.0, 2.0, 2.0];
    let inst = instances::parallel_lines(&times, &caps, 3.0, 150.0, 60.0).unwrap();
    let sol = solve(&inst, &quick()).unwrap();
    let greedy = shortest_path_first(&times, &caps, 3.0);
    let eps = inst.model.epsilon;
    let y = [greedy[0], greedy[1] - eps, eps];
    let oracle = inner_lp(&inst, &fleets_at(&inst, &y)).unwrap().unwrap().objective;
    assert!((sol.objective - oracle).abs() <= 1e-3 * oracle, "{} vs {oracle}", sol.objective);
    assert_eq!(sol.status, SolveStatus::Optimal);
}

#[test]
fn bounds_are_monotone_and_gap_consistent() {
    let inst = instances::parallel_lines(&[10.0, 12.0, 14.0], &[3.0, 3.0, 3.0], 4.0, 100.0, 40.0).unwrap();
    let sol = solve(&inst, &quick()).unwrap();
    for w in sol.trace.windows(2) {
        assert!(w[1].lower_bound >= w[0].lower_bound);
        assert!(w[1].upper_bound <= w[0].upper_bound);
    }
    assert!((sol.gap - relative_gap(sol.lower_bound, sol.objective)).abs() <= 1e-12);
    assert!(inst.max_violation(&sol.values) <= 1e-8);
}

#[test]
fn node_limit_reports_time_limit_with_incumbent() {
    let inst = instances::parallel_lines(&[10.0, 12.0, 14.0], &[3.0, 3.0, 3.0], 4.0, 100.0, 40.0).unwrap();
    let cfg = SolverConfig { max_nodes: 1, gap_tolerance: 0.0, ..quick() };
    let sol = solve(&inst, &cfg).unwrap();
    assert!(sol.is_feasible());
    if sol.gap > 0.0 {
        assert_eq!(sol.status, SolveStatus::TimeLimit);
    }
}

#[test]
fn infeasible_instance() {
    // demand beyond what every vehicle together can carry
    let inst = instances::parallel_lines(&[10.0, 20.0], &[1.0, 1.0], 2.0, 500.0, 60.0).unwrap();
    let sol = solve(&inst, &quick()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(!sol.is_feasible());
}

#[test]
fn deterministic_repeat() {
    let inst = instances::parallel_lines(&[10.0, 12.0, 14.0], &[3.0, 3.0, 3.0], 4.0, 100.0, 40.0).unwrap();
    let a = solve(&inst, &quick()).unwrap();
    let b = solve(&inst, &quick()).unwrap();
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.values, b.values);
    assert_eq!(a.lower_bound, b.lower_bound);
}
