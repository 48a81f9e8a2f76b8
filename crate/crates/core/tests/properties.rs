mod common;

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use transit_mitigation::analysis::instances;
use transit_mitigation::formulation::ConstraintFamily;
use transit_mitigation::itm::candidate_times;
use transit_mitigation::network::{
    build_network, path_cost, path_rank_cost, LineKind, LineSpec, ModeSpec, NetworkSpec, OdPair, Stop, TransitNetwork,
};
use transit_mitigation::reference;
use transit_mitigation::evaluator::{evaluate, MitigationPlan};
use transit_mitigation::itm::compute_reference_assignments;
use transit_mitigation::scenario::{build_distribution, DemandPattern, DemandShape, DurationKind, Scenario};
use transit_mitigation::solver::lp::{LinearProgram, LpError, Sense};
use transit_mitigation::solver::relaxation::NodeBox;
use transit_mitigation::solver::{solve, SolverConfig};

fn shape() -> impl Strategy<Value = DemandShape> {
    prop::sample::select(DemandShape::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn demand_is_nonnegative_and_additive(
        shape in shape(),
        lo in 0.0..50.0_f64,
        extra in 0.0..50.0_f64,
        cuts in prop::collection::vec(0.0..1.0_f64, 2),
    ) {
        let horizon = 120.0;
        let pat = DemandPattern::new(shape, lo, lo + extra);
        for k in 0..=24 {
            prop_assert!(pat.density(k as f64 * 5.0, horizon) >= 0.0);
        }
        let (a, b) = (cuts[0].min(cuts[1]) * horizon, cuts[0].max(cuts[1]) * horizon);
        let whole = pat.flow(0.0, horizon, horizon);
        let parts = pat.flow(0.0, a, horizon) + pat.flow(a, b, horizon) + pat.flow(b, horizon, horizon);
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.max(1.0));
    }

    #[test]
    fn duration_pmfs_are_distributions(
        kind in prop::sample::select(vec![
            DurationKind::Dirac0,
            DurationKind::DiracTbar,
            DurationKind::BiDirac,
            DurationKind::Uniform,
            DurationKind::normal_like(),
            DurationKind::exponential_like(),
        ]),
        steps in 4usize..30,
    ) {
        let delta = 10.0;
        let t_bar = delta * steps as f64;
        let d = build_distribution(&kind, t_bar, delta).unwrap();
        prop_assert!((d.pmf.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(d.pmf.iter().all(|&g| g >= 0.0));
        for &t in &d.support {
            let k = t / delta;
            prop_assert!((k - k.round()).abs() < 1e-9 && t <= t_bar + 1e-9);
        }
        // Conditional mean of what remains never decreases as time passes.
        let mut last = 0.0;
        for k in 0..steps {
            if let Some(m) = d.conditional_mean_after(k as f64 * delta) {
                prop_assert!(m >= last - 1e-9);
                prop_assert!(m > k as f64 * delta);
                last = m;
            }
        }
    }

    #[test]
    fn lp_matches_vertex_enumeration(
        n in 2usize..4,
        cost in prop::collection::vec(-5.0..5.0_f64, 4),
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0_f64, 4), 1..4),
        rhs in prop::collection::vec(0.0..6.0_f64, 3),
        upper in prop::collection::vec(0.5..4.0_f64, 4),
    ) {
        // Every constraint has a nonnegative rhs, so the origin is feasible;
        // finite upper bounds keep the program bounded.
        let mut lp = LinearProgram::new();
        for j in 0..n {
            lp.add_var(cost[j], 0.0, upper[j]);
        }
        for (r, row) in rows.iter().enumerate() {
            lp.add_constraint((0..n).map(|j| (j, row[j])).collect(), Sense::Le, rhs[r]);
        }
        let sol = lp.solve().unwrap();

        let mut a: Vec<Vec<f64>> = rows.iter().map(|r| r[..n].to_vec()).collect();
        let mut b: Vec<f64> = rhs[..rows.len()].to_vec();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            a.push(e.clone());
            b.push(upper[j]);
            e[j] = -1.0;
            a.push(e);
            b.push(0.0);
        }
        let best = vertex_min(&cost[..n], &a, &b);
        prop_assert!((sol.objective - best).abs() <= 1e-7 * best.abs().max(1.0), "{} vs {best}", sol.objective);
    }

    #[test]
    fn infeasible_lp_is_reported(a in 0.5..3.0_f64, b in 0.5..3.0_f64) {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(x, a)], Sense::Le, b);
        lp.add_constraint(vec![(x, a)], Sense::Ge, b + 1.0);
        prop_assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn paths_are_loopless_walks_and_ranked(spec in network_spec(), od in (0usize..5, 0usize..5)) {
        prop_assume!(od.0 != od.1);
        let pair = OdPair::new(format!("S{}", od.0), format!("S{}", od.1));
        let net = match build_network(&spec, std::slice::from_ref(&pair)) {
            Ok(net) => net,
            Err(e) => {
                let all = dfs_paths(&spec_network(&spec), &pair.origin, &pair.destination);
                prop_assert!(all.is_empty(), "{e}");
                return Ok(());
            }
        };
        let paths = &net.paths[0];
        prop_assert!(!paths.is_empty() && paths.len() <= spec.paths_per_od);
        let mut seen = HashSet::new();
        for p in paths {
            prop_assert!(seen.insert(p.segments.clone()));
            let first = &net.segments[p.segments[0]];
            prop_assert_eq!(&first.from, &pair.origin);
            prop_assert_eq!(&net.segments[*p.segments.last().unwrap()].to, &pair.destination);
            let mut stops = HashSet::from([first.from.clone()]);
            for w in p.segments.windows(2) {
                prop_assert_eq!(&net.segments[w[0]].to, &net.segments[w[1]].from);
            }
            for &s in &p.segments {
                prop_assert!(stops.insert(net.segments[s].to.clone()), "stop revisited");
            }
            // A boarding opens every line-run.
            let runs: Vec<usize> = p
                .segments
                .iter()
                .enumerate()
                .filter(|&(i, &s)| i == 0 || net.segments[s].line != net.segments[p.segments[i - 1]].line)
                .map(|(_, &s)| s)
                .collect();
            prop_assert_eq!(&runs, &p.boardings);
            let rt: f64 = p.segments.iter().map(|&s| net.segments[s].run_time).sum();
            prop_assert!((rt - p.run_time).abs() < 1e-9);
        }
        for w in paths.windows(2) {
            prop_assert!(path_rank_cost(&net, &w[0]) <= path_rank_cost(&net, &w[1]) + 1e-9);
        }
        // Uniform hop times: the cheapest loopless walk is never pruned.
        let best = dfs_paths(&net, &pair.origin, &pair.destination)
            .into_iter()
            .map(|(rt, boardings)| rt + net.transfer_penalty * (boardings - 1) as f64)
            .fold(f64::INFINITY, f64::min);
        prop_assert!((path_rank_cost(&net, &paths[0]) - best).abs() < 1e-9);
    }

    #[test]
    fn path_cost_falls_as_fleets_grow(scale in 1.0..5.0_f64, extra in 0.0..3.0_f64) {
        let s = reference::deterministic();
        let nets = s.networks().unwrap();
        let net = &nets.normal;
        let y: Vec<f64> = net.lines.iter().map(|l| l.base_fleet.max(0.1) * scale).collect();
        let more: Vec<f64> = y.iter().map(|v| v + extra).collect();
        for p in net.all_paths() {
            let a = path_cost(net, p, &y, 1.0, s.epsilon).unwrap();
            let b = path_cost(net, p, &more, 1.0, s.epsilon).unwrap();
            prop_assert!(b <= a + 1e-12);
            prop_assert!(b >= p.run_time);
        }
    }

    #[test]
    fn propagation_keeps_reciprocal_boxes(lo in 0.02..2.0_f64, width in 0.0..2.0_f64) {
        let inst = instances::independent_lines(&[1.0, 4.0, 9.0], 6.0).unwrap();
        let c = inst.couplings[1];
        let mut b = NodeBox::root(&inst);
        b.lower[c.u] = lo;
        b.upper[c.u] = lo + width;
        prop_assume!(b.propagate(&inst));
        for c in &inst.couplings {
            prop_assert!(b.lower[c.u] <= 1.0 / b.lower[c.y] + 1e-12);
            prop_assert!(b.upper[c.u] >= 1.0 / b.upper[c.y] - 1e-12);
            let root = NodeBox::root(&inst);
            prop_assert!(b.lower[c.y] >= root.lower[c.y] - 1e-12 && b.upper[c.y] <= root.upper[c.y] + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tiny_solutions_are_consistent(seed in 1000u64..2000) {
        let model = common::tiny_model(seed);
        let inst = model.to_instance().unwrap();
        prop_assert!(inst.audit().is_complete());
        let sol = solve(&inst, &SolverConfig::default()).unwrap();
        prop_assert!(sol.lower_bound <= sol.objective + 1e-9);
        for r in &inst.rows {
            if matches!(r.family, ConstraintFamily::PathChoice | ConstraintFamily::FleetConservation) {
                prop_assert!(r.violation(&sol.values) <= 1e-8, "{} {}", r.family.name(), r.label);
            }
        }
        let oracle = common::oracle(&model);
        prop_assert!(sol.objective <= oracle.objective * (1.0 + 1e-3));
    }
}

fn corridor(q: f64, fleet: f64, shape: DemandShape) -> Scenario {
    let json = r#"{
      "network": {
        "stops": [{"id": "A"}, {"id": "B"}, {"id": "C"}],
        "modes": {"bus": {"run_time": 5.0, "capacity": 40.0}},
        "lines": [
          {"id": "L1", "mode": "bus", "stops": ["A", "B", "C"], "round_trip_time": 20.0, "base_fleet": FLEET, "max_fleet": 8.0},
          {"id": "L2", "mode": "bus", "stops": ["A", "C"], "round_trip_time": 30.0, "base_fleet": 2.0, "max_fleet": 8.0}
        ]
      },
      "odpairs": [
        {"origin": "A", "destination": "C", "pattern": "uniform", "q_min": Q, "q_max": Q},
        {"origin": "B", "destination": "C", "pattern": "uniform", "q_min": 1.0, "q_max": 2.0}
      ],
      "disruption": {"broken": [{"line": "L1", "from": "A", "to": "B"}], "duration": {"kind": "uniform"}},
      "costs": {"alpha": 1.0, "beta": 0.1, "gamma": 1.0, "relocation": {"bus": {"line_transfer": "BLT"}}},
      "time": {"t_bar": 40.0, "delta": 10.0, "itm_interval": 10.0, "sim_interval": 5.0}
    }"#;
    Scenario::from_json(&json.replace("FLEET", &fleet.to_string()).replace("Q", &q.to_string()))
        .unwrap()
        .with_demand_shape(shape)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn evaluation_conserves_mass_and_is_linear_in_the_pmf(
        q in 1.0..20.0_f64,
        fleet in 0.5..6.0_f64,
        shape in shape(),
        weights in prop::collection::vec(0.0..1.0_f64, 4),
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 0.1);
        let total: f64 = weights.iter().sum();
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let s = corridor(q, fleet, shape).with_duration(DurationKind::Custom { pmf: pmf.clone() });
        let nets = s.networks().unwrap();
        let refs = compute_reference_assignments(&nets, &s).unwrap();
        let plan = MitigationPlan::do_nothing(&nets.disrupted, &refs);
        let direct = evaluate(&plan, &s, &nets).unwrap();
        for r in &direct.realizations {
            prop_assert!(r.conservation_error().abs() <= 1e-9 * r.arrivals.max(1.0));
            prop_assert!(r.final_queue.abs() <= 1e-9 * r.arrivals.max(1.0));
        }
        let mut weighted = 0.0;
        for (k, &g) in pmf.iter().enumerate() {
            let mut one = vec![0.0; pmf.len()];
            one[k] = 1.0;
            let single = s.with_duration(DurationKind::Custom { pmf: one });
            weighted += g * evaluate(&plan, &single, &nets).unwrap().expected_user_cost;
        }
        prop_assert!((weighted - direct.expected_user_cost).abs() <= 1e-9 * direct.expected_user_cost.max(1.0));
    }
}

#[test]
fn candidate_times_are_grid_multiples_within_horizon() {
    for kind in [DurationKind::Uniform, DurationKind::BiDirac, DurationKind::exponential_like()] {
        let s = reference::stochastic().with_duration(kind);
        let zs = candidate_times(&s).unwrap();
        let dist = s.duration().unwrap();
        for z in zs {
            let k = z / s.time.itm_interval;
            assert!((k - k.round()).abs() < 1e-9 && z <= s.time.t_bar);
            assert!(dist.survival(z) > 0.0);
        }
    }
}

/// Minimum of `c x` over `{a x <= b}` by enumerating every vertex.
fn vertex_min(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let n = c.len();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let m = DMatrix::from_fn(n, n, |i, j| a[idx[i]][j]);
        let r = DVector::from_fn(n, |i, _| b[idx[i]]);
        if let Some(x) = m.lu().solve(&r) {
            let ok = a.iter().zip(b).all(|(row, &bi)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9);
            if ok && x.iter().all(|v| v.is_finite()) {
                best = best.min(c.iter().zip(x.iter()).map(|(p, q)| p * q).sum());
            }
        }
        let Some(i) = (0..n).rev().find(|&i| idx[i] < a.len() - n + i) else { return best };
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn network_spec() -> impl Strategy<Value = NetworkSpec> {
    let line = prop::sample::subsequence((0..5).collect::<Vec<usize>>(), 2..=4).prop_shuffle();
    prop::collection::vec(line, 1..=4).prop_map(|lines| NetworkSpec {
        stops: (0..5).map(|i| Stop { id: format!("S{i}"), x: 0.0, y: 0.0 }).collect(),
        modes: BTreeMap::from([("bus".into(), ModeSpec { run_time: 4.0, capacity: 50.0 })]),
        lines: lines
            .into_iter()
            .enumerate()
            .map(|(k, stops)| LineSpec {
                id: format!("L{k}"),
                mode: "bus".into(),
                stops: stops.iter().map(|s| format!("S{s}")).collect(),
                round_trip_time: 20.0,
                base_fleet: 1.0,
                max_fleet: 3.0,
                capacity: None,
                run_times: None,
                kind: LineKind::Regular,
                role: None,
                parent: None,
            })
            .collect(),
        depots: vec![],
        paths_per_od: 4,
        transfer_penalty: 5.0,
    })
}

/// Network with the same segments but no OD pairs, for the reference search.
fn spec_network(spec: &NetworkSpec) -> TransitNetwork {
    build_network(spec, &[]).unwrap()
}

/// Every loopless walk from `from` to `to` as (run time, line-runs).
fn dfs_paths(net: &TransitNetwork, from: &str, to: &str) -> Vec<(f64, usize)> {
    fn go(
        net: &TransitNetwork,
        at: &str,
        to: &str,
        visited: &mut Vec<String>,
        last_line: Option<usize>,
        acc: (f64, usize),
        out: &mut Vec<(f64, usize)>,
    ) {
        if at == to {
            out.push(acc);
            return;
        }
        for s in net.segments.iter().filter(|s| s.from == at) {
            if visited.contains(&s.to) {
                continue;
            }
            visited.push(s.to.clone());
            let runs = acc.1 + usize::from(last_line != Some(s.line));
            go(net, &s.to, to, visited, Some(s.line), (acc.0 + s.run_time, runs), out);
            visited.pop();
        }
    }
    let mut out = Vec::new();
    go(net, from, to, &mut vec![from.to_string()], None, (0.0, 0), &mut out);
    out
}
