use approx::assert_abs_diff_eq;

use super::*;
use crate::network::apply_disruption;
use crate::reference;
use crate::scenario::{CostComponents, DurationKind, ModeCosts};

fn det_instance() -> (Scenario, QcqpInstance) {
    let s = reference::deterministic();
    let nets = s.networks().unwrap();
    let inst = build_bm(&nets.disrupted, &s, 60.0).unwrap();
    (s, inst)
}

fn line<'a>(net: &'a TransitNetwork, id: &str) -> &'a Line {
    &net.lines[net.line_index(id).unwrap()]
}

#[test]
fn preset_and_component_costs() {
    let s = reference::deterministic();
    let net = s.networks().unwrap().disrupted;
    assert_eq!(relocation_cost(line(&net, "L1"), line(&net, "L5"), &s.costs).unwrap().0, 0.0);
    assert_eq!(relocation_cost(line(&net, "DEPOT:bus"), line(&net, "L8"), &s.costs).unwrap().0, 300.0);
    assert_eq!(relocation_cost(line(&net, "L3"), line(&net, "L8"), &s.costs).unwrap().0, 100.0);
    assert_eq!(relocation_cost(line(&net, "L2"), line(&net, "L7"), &s.costs).unwrap().0, 200.0);
    assert!(matches!(
        relocation_cost(line(&net, "L1"), line(&net, "L8"), &s.costs),
        Err(Error::CrossModeArc(_, _))
    ));
    let mut costs = s.costs.clone();
    costs.relocation.insert(
        "metro".into(),
        ModeCosts {
            line_transfer: Some(RelocationCost::Components(CostComponents { c0: 0.0, c_bar: 0.0, gamma_d: 2.0, t_d: 7.0 })),
            ..Default::default()
        },
    );
    assert_eq!(relocation_cost(line(&net, "L2"), line(&net, "L7"), &costs).unwrap(), (14.0, 7.0));
}

#[test]
fn capacity_rows_are_scaled_by_round_trip_over_capacity() {
    let (s, inst) = det_instance();
    let q = s.demand(0.0, 60.0)[0];
    let row = inst.rows.iter().find(|r| r.family == ConstraintFamily::SegmentCapacity && r.label == "L1:1>5").unwrap();
    // Unscaled fleet coefficient K T / R = 800 * 60 / 36.
    let unscaled = 800.0 * 60.0 / 36.0;
    assert_abs_diff_eq!(unscaled, 1333.333333, epsilon = 1e-5);
    let y = inst.y_vars[0];
    assert!(row.coeffs.contains(&(y, -1.0)));
    let (_, a) = row.coeffs.iter().find(|(j, _)| *j == inst.p_vars[0][0]).copied().unwrap_or((0, q / unscaled));
    assert_abs_diff_eq!(a, q / unscaled, epsilon = 1e-12);
}

#[test]
fn reference_instance_audits_clean() {
    let (_, inst) = det_instance();
    let audit = inst.audit();
    assert!(audit.is_complete(), "{:?}", audit.gaps);
    assert!(inst.dump().contains("SegmentCapacity"));
    let probe = status_quo_probe(&inst).unwrap();
    assert!(probe.feasible, "{probe:?}");
}

#[test]
fn lla_fixes_bridging_and_bm_is_identity() {
    let (_, inst) = det_instance();
    let lla = restrict(&inst, StrategyFamily::Lla);
    for (arc, &j) in inst.model.arcs.iter().zip(&inst.x_vars) {
        let to = &inst.model.lines[arc.to].id;
        if to == "L8" {
            assert_eq!(lla.vars[j].upper, 0.0);
        }
        if arc.class == ArcClass::ShortTurn {
            assert!(lla.vars[j].upper > 0.0);
        }
    }
    assert_eq!(lla.objective, inst.objective);
    assert_eq!(restrict(&inst, StrategyFamily::Bm), inst);
}

#[test]
fn family_arc_sets_nest() {
    let (_, inst) = det_instance();
    let open = |f| {
        let r = restrict(&inst, f);
        r.x_vars.iter().filter(|&&j| r.vars[j].upper > 0.0).count()
    };
    assert!(open(StrategyFamily::Lla) < open(StrategyFamily::Bb));
    assert!(open(StrategyFamily::Bb) < open(StrategyFamily::Bm));
}

fn flat_refs(net: &TransitNetwork) -> ReferenceAssignments {
    let a = Assignment {
        shares: net.paths.iter().map(|ps| ps.iter().enumerate().map(|(i, _)| if i == 0 { 1.0 } else { 0.0 }).collect()).collect(),
        path_costs: net.paths.iter().map(|ps| ps.iter().map(|p| p.run_time).collect()).collect(),
    };
    ReferenceAssignments { normal: a.clone(), disrupted: a }
}

#[test]
fn single_atom_at_zero_matches_fixed_duration_model() {
    let s = reference::stochastic().with_duration(DurationKind::Custom {
        pmf: (1..=24).map(|k| if k == 9 { 1.0 } else { 0.0 }).collect(),
    });
    let net = s.networks().unwrap().disrupted;
    let bm = build_bm(&net, &s, 90.0).unwrap();
    let itm = build_itm_subproblem(&net, &s, 0.0, &flat_refs(&net)).unwrap();
    assert_eq!(bm.vars, itm.vars);
    assert_eq!(bm.couplings, itm.couplings);
    assert_eq!(bm.rows.len(), itm.rows.len());
    for (a, b) in bm.rows.iter().zip(&itm.rows) {
        assert_eq!(a.coeffs.len(), b.coeffs.len());
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            assert_eq!(x.0, y.0);
            assert_abs_diff_eq!(x.1, y.1, epsilon = 1e-12 * x.1.abs().max(1.0));
        }
    }
    for (a, b) in bm.objective.iter().zip(&itm.objective) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs().max(1.0));
    }
    for (a, b) in bm.bilinear.iter().zip(&itm.bilinear) {
        assert_abs_diff_eq!(a.coef, b.coef, epsilon = 1e-9 * a.coef.abs().max(1.0));
    }
}

#[test]
fn zero_probability_recovery_fixes_relocation() {
    let s = reference::stochastic().with_duration(DurationKind::Dirac0);
    let net = s.networks().unwrap().disrupted;
    let inst = build_itm_subproblem(&net, &s, 10.0, &flat_refs(&net)).unwrap();
    assert!(inst.x_vars.iter().all(|&j| inst.vars[j].upper == 0.0));
    assert!(!inst.rows.iter().any(|r| r.family == ConstraintFamily::SegmentCapacity));
    assert!(matches!(build_itm_subproblem(&net, &s, 20.0, &flat_refs(&net)), Err(Error::InitiationBeyondSupport(_))));
}

#[test]
fn emergency_lines_start_at_their_floor() {
    let (_, inst) = det_instance();
    let l5 = inst.model.lines.iter().position(|l| l.id == "L5").unwrap();
    let row = inst.rows.iter().find(|r| r.family == ConstraintFamily::FleetConservation && r.owner == l5).unwrap();
    assert_eq!(row.rhs, inst.model.epsilon);
}

#[test]
fn disruption_keeps_input_network() {
    let s = reference::deterministic();
    let nets = s.networks().unwrap();
    let before = nets.normal.clone();
    let _ = apply_disruption(&nets.normal, &s.broken_segment_ids(), &s.disruption.emergency_lines).unwrap();
    assert_eq!(before, nets.normal);
}
