use approx::assert_abs_diff_eq;
use serde_json::json;

use super::*;
use crate::formulation::build_bm;
use crate::itm::compute_reference_assignments;
use crate::reference;
use crate::scenario::DurationKind;
use crate::solver::{SolveStatus, Solution};

/// One bus line A-B, run time 5, round trip 10, two vehicles of 10 seats:
/// 10 passengers per 5-minute interval. Demand 3 per minute over 10 minutes.
fn one_segment(rate: f64) -> Scenario {
    let doc = json!({
        "network": {
            "stops": [{"id": "A"}, {"id": "B"}],
            "modes": {"bus": {"run_time": 5.0, "capacity": 10.0}},
            "lines": [{"id": "L1", "mode": "bus", "stops": ["A", "B"], "round_trip_time": 10.0,
                       "base_fleet": 2.0, "max_fleet": 4.0}],
        },
        "odpairs": [{"origin": "A", "destination": "B", "pattern": "uniform", "q_min": rate, "q_max": rate}],
        "disruption": {"duration": {"kind": "diracTbar"}},
        "costs": {"alpha": 1.0, "beta": 1.0, "gamma": 1.0},
        "time": {"t_bar": 10.0, "delta": 5.0, "itm_interval": 5.0, "sim_interval": 5.0},
    });
    Scenario::from_json(&doc.to_string()).unwrap()
}

fn do_nothing(scenario: &Scenario) -> (Networks, MitigationPlan) {
    let nets = scenario.networks().unwrap();
    let refs = compute_reference_assignments(&nets, scenario).unwrap();
    let plan = MitigationPlan::do_nothing(&nets.disrupted, &refs);
    (nets, plan)
}

#[test]
fn fifo_queue_recursion() {
    // Arrivals 15, 15, then none; service 10 per interval: queues 5, 10, 0.
    let s = one_segment(3.0);
    let (nets, plan) = do_nothing(&s);
    let r = evaluate(&plan, &s, &nets).unwrap();
    assert_eq!(r.realizations.len(), 1);
    let real = &r.realizations[0];
    assert_abs_diff_eq!(real.arrivals, 30.0, epsilon = 1e-12);
    assert_abs_diff_eq!(real.queued_at_horizon, 10.0, epsilon = 1e-12);
    assert_abs_diff_eq!(real.queue_cost, 15.0 * 5.0, epsilon = 1e-9);
    // Ride 5 plus half the 5-minute headway for every passenger.
    assert_abs_diff_eq!(real.boarding_cost, 30.0 * 7.5, epsilon = 1e-9);
    assert_eq!(real.final_queue, 0.0);
    assert_abs_diff_eq!(r.operator_cost, 0.0);
}

#[test]
fn ample_capacity_costs_the_normal_path_cost() {
    let s = one_segment(1.0);
    let (nets, plan) = do_nothing(&s);
    let r = evaluate(&plan, &s, &nets).unwrap();
    let q: f64 = s.demand(0.0, s.time.t_bar).iter().sum();
    let t_pn = plan.references.normal.mean_cost(0);
    let slack = 0.5 * s.costs.beta * s.costs.gamma * s.time.sim_interval * q;
    assert!((r.expected_user_cost - s.costs.beta * q * t_pn).abs() <= slack);
    assert_eq!(r.realizations[0].queue_cost, 0.0);
}

#[test]
fn reference_do_nothing_conserves_mass_and_is_linear() {
    let s = reference::stochastic().with_duration(DurationKind::normal_like());
    let (nets, plan) = do_nothing(&s);
    let direct = evaluate(&plan, &s, &nets).unwrap();
    for r in &direct.realizations {
        assert!(r.conservation_error().abs() <= 1e-9 * r.arrivals.max(1.0), "{r:?}");
    }
    let dist = s.duration().unwrap();
    let mut weighted = 0.0;
    for (k, g) in dist.pmf.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        let mut pmf = vec![0.0; dist.pmf.len()];
        pmf[k] = 1.0;
        let single = s.with_duration(DurationKind::Custom { pmf });
        weighted += g * evaluate(&plan, &single, &nets).unwrap().expected_user_cost;
    }
    assert_abs_diff_eq!(weighted, direct.expected_user_cost, epsilon = 1e-9 * direct.expected_user_cost);
}

fn status_quo(scenario: &Scenario) -> (Networks, crate::formulation::QcqpInstance, ReferenceAssignments, Solution) {
    let nets = scenario.networks().unwrap();
    let refs = compute_reference_assignments(&nets, scenario).unwrap();
    let inst = build_bm(&nets.disrupted, scenario, 60.0).unwrap();
    let mut values = vec![0.0; inst.num_vars()];
    for (l, &j) in inst.y_vars.iter().enumerate() {
        values[j] = inst.model.conservation_rhs(l);
    }
    for (w, cols) in inst.p_vars.iter().enumerate() {
        for (h, &j) in cols.iter().enumerate() {
            values[j] = refs.disrupted.shares[w][h];
        }
    }
    let values = inst.with_exact_inverses(&values);
    let sol = Solution {
        objective: inst.objective_value(&values),
        values,
        lower_bound: 0.0,
        gap: 0.0,
        status: SolveStatus::TimeLimit,
        nodes: 0,
        wall_time: Default::default(),
        duals: None,
        trace: Vec::new(),
    };
    (nets, inst, refs, sol)
}

#[test]
fn status_quo_decodes_to_do_nothing() {
    let s = reference::deterministic();
    let (nets, inst, refs, sol) = status_quo(&s);
    let plan = decode_plan(&sol, &inst, "BM", 0.0, &refs).unwrap();
    assert!(plan.is_do_nothing());
    assert_eq!(plan.operator_cost, 0.0);
    assert_eq!(plan.backup_count(), 0);
    for (l, line) in nets.disrupted.lines.iter().enumerate() {
        if line.kind == LineKind::Emergency {
            assert_eq!(plan.fleets[l], 0.0, "{}", line.id);
        }
    }
    let a = evaluate(&plan, &s, &nets).unwrap();
    let b = evaluate(&MitigationPlan::do_nothing(&nets.disrupted, &refs), &s, &nets).unwrap();
    assert_abs_diff_eq!(a.total, b.total, epsilon = 1e-9 * a.total);
}

#[test]
fn backup_count_rounds_but_cost_does_not() {
    let s = reference::deterministic();
    let (_, inst, refs, mut sol) = status_quo(&s);
    let m = &inst.model;
    let (a, arc) = m.arcs.iter().enumerate().find(|(_, a)| m.lines[a.from].kind == LineKind::Depot).unwrap();
    sol.values[inst.x_vars[a]] = 1.9;
    let plan = decode_plan(&sol, &inst, "BB", 0.0, &refs).unwrap();
    assert_eq!(plan.backup_count(), 2);
    assert_abs_diff_eq!(plan.backup_vehicles, 1.9);
    assert_abs_diff_eq!(plan.relocation_cost, 1.9 * arc.cost, epsilon = 1e-12);
}

#[test]
fn plan_routing_over_an_unserved_line_is_rejected() {
    let s = reference::deterministic();
    let (nets, mut plan) = do_nothing(&s);
    let net = &nets.disrupted;
    let (w, h) = net
        .paths
        .iter()
        .enumerate()
        .find_map(|(w, ps)| ps.iter().position(|p| p.boarded_lines(net).any(|l| net.lines[l].base_fleet == 0.0)).map(|h| (w, h)))
        .unwrap();
    plan.shares[w].iter_mut().for_each(|p| *p = 0.0);
    plan.shares[w][h] = 1.0;
    assert!(matches!(evaluate(&plan, &s, &nets), Err(Error::InconsistentPlan(_))));
}

#[test]
fn larger_fleet_never_costs_more_on_one_segment() {
    let s = one_segment(3.0);
    let (nets, plan) = do_nothing(&s);
    let base = evaluate(&plan, &s, &nets).unwrap().expected_user_cost;
    let mut richer = s.clone();
    richer.network.lines[0].base_fleet = 3.0;
    let (nets, plan) = do_nothing(&richer);
    assert!(evaluate(&plan, &richer, &nets).unwrap().expected_user_cost <= base);
}
