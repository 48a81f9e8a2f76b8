//! Initiation-time sweep and the reference assignments it relies on.
//!
//! The sweep solves the initiation-time subproblem at `z = 0, I, 2I, ...`
//! and keeps the best. By default it stops at the first `z` that fails to
//! improve; [`Sweep::Exhaustive`] evaluates every admissible `z`.

use crate::error::{Error, Result};
use crate::formulation::{build_bm, build_itm_subproblem, Assignment, ConstraintFamily, QcqpInstance, ReferenceAssignments, VarKind};
use crate::network::{self, LineKind, TransitNetwork};
use crate::scenario::{Networks, Scenario};
use crate::solver::lp::{LinearProgram, Sense};
use crate::solver::{solve_from, Solution, SolveStatus, SolverConfig};

/// Path shares at the base fleet without relocation, for both networks.
///
/// Each network gets a share-only program: minimize demand-weighted path
/// cost at `y0` subject to segment capacities at each OD's peak arrival
/// rate, so the assignment fits every sub-window of the horizon. Paths that
/// board a line without base fleet are excluded. Capacity rows are elastic,
/// so an overloaded status quo still gets the least-overloaded assignment
/// instead of an error.
pub fn compute_reference_assignments(nets: &Networks, scenario: &Scenario) -> Result<ReferenceAssignments> {
    Ok(ReferenceAssignments {
        normal: base_assignment(&nets.normal, scenario)?,
        disrupted: base_assignment(&nets.disrupted, scenario)?,
    })
}

fn base_assignment(net: &TransitNetwork, scenario: &Scenario) -> Result<Assignment> {
    let t_bar = scenario.time.t_bar;
    let inst = build_bm(net, scenario, t_bar)?;
    let m = &inst.model;
    // Peak density over average density, per OD; the shapes peak at an end or the middle.
    let peak_ratio: Vec<f64> = scenario
        .patterns()
        .iter()
        .map(|pat| {
            let avg = pat.flow(0.0, t_bar, t_bar) / t_bar;
            let peak = [0.0, 0.5, 1.0].iter().map(|s| pat.density(s * t_bar, t_bar)).fold(0.0, f64::max);
            if avg > 0.0 { peak / avg } else { 1.0 }
        })
        .collect();
    let y0: Vec<f64> = net.lines.iter().map(|l| l.base_fleet).collect();
    let floored: Vec<f64> = y0.iter().map(|&y| y.max(scenario.epsilon)).collect();
    let gamma = scenario.costs.gamma;

    let mut path_costs = Vec::with_capacity(net.paths.len());
    for paths in &net.paths {
        let costs = paths
            .iter()
            .map(|p| network::path_cost(net, p, &floored, gamma, scenario.epsilon))
            .collect::<Result<Vec<f64>>>()?;
        path_costs.push(costs);
    }

    let mut lp = LinearProgram::new();
    let mut cols = Vec::with_capacity(m.ods.len());
    let mut worst = 0.0_f64;
    for (w, od) in m.ods.iter().enumerate() {
        let weight = if od.weight > 0.0 { od.weight } else { 1.0 };
        let served: Vec<bool> = od
            .paths
            .iter()
            .map(|p| p.boardings.iter().all(|&l| m.lines[l].kind != LineKind::Depot && y0[l] > 0.0))
            .collect();
        if !served.iter().any(|&s| s) {
            let od = &net.ods[w];
            return Err(Error::Disconnected { origin: od.origin.clone(), destination: od.destination.clone() });
        }
        let c: Vec<usize> = od
            .paths
            .iter()
            .enumerate()
            .map(|(h, _)| {
                if served[h] {
                    worst = worst.max(weight * path_costs[w][h]);
                }
                lp.add_var(weight * path_costs[w][h], 0.0, if served[h] { 1.0 } else { 0.0 })
            })
            .collect();
        lp.add_constraint(c.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, 1.0);
        cols.push(c);
    }
    // Any overload costs more than every possible rerouting.
    let penalty = 1e3 * worst.max(1.0) * m.ods.len() as f64;
    for r in inst.rows.iter().filter(|r| r.family == ConstraintFamily::SegmentCapacity) {
        let e = lp.add_var(penalty, 0.0, f64::INFINITY);
        let mut coeffs = vec![(e, -1.0)];
        let mut rhs = r.rhs;
        for &(j, a) in &r.coeffs {
            match inst.vars[j].kind {
                VarKind::PathShare { od, path } => coeffs.push((cols[od][path], a * peak_ratio[od])),
                VarKind::Fleet { line } => rhs -= a * y0[line],
                _ => {}
            }
        }
        lp.add_constraint(coeffs, Sense::Le, rhs);
    }
    let sol = lp.solve().map_err(|e| Error::SolverFailure(format!("reference assignment: {e}")))?;
    let shares = cols
        .iter()
        .map(|c| {
            let mut p: Vec<f64> = c.iter().map(|&j| sol.x[j].clamp(0.0, 1.0)).collect();
            let sum: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= sum);
            p
        })
        .collect();
    Ok(Assignment { shares, path_costs })
}

/// How far the initiation-time sweep goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sweep {
    /// Stop at the first `z` that does not improve on the best so far.
    #[default]
    EarlyBreak,
    /// Evaluate every admissible `z`.
    Exhaustive,
}

/// One evaluated initiation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ItmStep {
    pub z: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ItmResult {
    pub z_opt: f64,
    /// `F*(z)` for every evaluated `z`, in sweep order.
    pub trace: Vec<ItmStep>,
    pub solution: Solution,
    /// Subproblem at `z_opt`.
    pub instance: QcqpInstance,
    pub references: ReferenceAssignments,
}

impl ItmResult {
    pub fn objective(&self) -> f64 {
        self.solution.objective
    }
}

/// Share of the total time limit given to each subproblem.
pub const BUDGET_DIVISOR: u32 = 4;

/// Candidate initiation times: multiples of the sweep interval in `[0, T̄]`
/// where the disruption may still be ongoing.
pub fn candidate_times(scenario: &Scenario) -> Result<Vec<f64>> {
    let n = crate::scenario::steps(scenario.time.t_bar, scenario.time.itm_interval, "initiation interval")?;
    let dist = scenario.duration()?;
    Ok((0..=n)
        .map(|k| k as f64 * scenario.time.itm_interval)
        .filter(|&z| dist.survival(z) > 0.0)
        .collect())
}

/// Runs the initiation-time sweep with `config.time_limit / 4` per subproblem.
pub fn run_itm(nets: &Networks, scenario: &Scenario, config: &SolverConfig, sweep: Sweep) -> Result<ItmResult> {
    run_itm_from(nets, scenario, config, sweep, None)
}

/// As [`run_itm`], seeding the first subproblem with a point of the
/// fixed-duration model on the same network.
pub fn run_itm_from(
    nets: &Networks,
    scenario: &Scenario,
    config: &SolverConfig,
    sweep: Sweep,
    start: Option<&[f64]>,
) -> Result<ItmResult> {
    let refs = compute_reference_assignments(nets, scenario)?;
    let per_z = config.clone().with_time_limit(config.time_limit / BUDGET_DIVISOR);
    let mut trace = Vec::new();
    let mut best: Option<(f64, Solution, QcqpInstance)> = None;
    let mut previous: Option<Vec<f64>> = start.map(<[f64]>::to_vec);
    for z in candidate_times(scenario)? {
        let inst = build_itm_subproblem(&nets.disrupted, scenario, z, &refs)?;
        let sol = solve_from(&inst, &per_z, previous.as_deref())?;
        if !sol.is_feasible() {
            if best.is_none() {
                return Err(Error::Infeasible(format!("initiation-time subproblem at z = {z}")));
            }
            trace.push(ItmStep { z, objective: f64::INFINITY, status: sol.status, gap: f64::INFINITY });
            if sweep == Sweep::EarlyBreak {
                break;
            }
            continue;
        }
        trace.push(ItmStep { z, objective: sol.objective, status: sol.status, gap: sol.gap });
        let improves = best.as_ref().is_none_or(|(_, b, _)| sol.objective < b.objective);
        log::debug!("itm z = {z}: objective {:.3} ({})", sol.objective, sol.status.name());
        previous = Some(sol.values.clone());
        if improves {
            best = Some((z, sol, inst));
        } else if sweep == Sweep::EarlyBreak {
            break;
        }
    }
    let (z_opt, solution, instance) = best.ok_or_else(|| Error::Infeasible("no admissible initiation time".into()))?;
    if trace.len() > 4 {
        log::warn!("initiation-time sweep needed {} subproblems", trace.len());
    }
    Ok(ItmResult { z_opt, trace, solution, instance, references: refs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::scenario::DurationKind;

    #[test]
    fn without_a_break_both_assignments_cost_the_same() {
        let mut s = reference::deterministic();
        s.disruption.broken.clear();
        let nets = s.networks().unwrap();
        let refs = compute_reference_assignments(&nets, &s).unwrap();
        for w in 0..nets.normal.ods.len() {
            let (n, d) = (refs.normal.mean_cost(w), refs.disrupted.mean_cost(w));
            assert!((n - d).abs() <= 1e-9 * n, "od {w}: {n} vs {d}");
        }
    }

    #[test]
    fn disrupted_shares_avoid_broken_and_unserved_lines() {
        let s = reference::deterministic();
        let nets = s.networks().unwrap();
        let refs = compute_reference_assignments(&nets, &s).unwrap();
        let net = &nets.disrupted;
        let broken = s.broken_segment_ids();
        for (w, paths) in net.paths.iter().enumerate() {
            assert!((refs.disrupted.shares[w].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (h, p) in paths.iter().enumerate() {
                assert!(p.segment_ids(net).all(|id| !broken.iter().any(|b| b == id)));
                if refs.disrupted.shares[w][h] > 1e-9 {
                    assert!(p.boarded_lines(net).all(|l| net.lines[l].base_fleet > 0.0 && !net.lines[l].is_depot()));
                }
            }
        }
    }

    #[test]
    fn reference_status_quo_fits_capacity() {
        let s = reference::deterministic();
        let nets = s.networks().unwrap();
        let refs = compute_reference_assignments(&nets, &s).unwrap();
        let inst = build_bm(&nets.disrupted, &s, s.time.t_bar).unwrap();
        let mut v = vec![0.0; inst.num_vars()];
        for (l, &j) in inst.y_vars.iter().enumerate() {
            v[j] = inst.model.conservation_rhs(l);
        }
        for (w, cols) in inst.p_vars.iter().enumerate() {
            for (h, &j) in cols.iter().enumerate() {
                v[j] = refs.disrupted.shares[w][h];
            }
        }
        for r in inst.rows.iter().filter(|r| r.family == ConstraintFamily::SegmentCapacity) {
            assert!(r.violation(&v) <= 1e-7, "{} overloaded by {}", r.label, r.violation(&v));
        }
    }

    #[test]
    fn candidates_stop_where_the_disruption_surely_ended() {
        let s = reference::stochastic().with_duration(DurationKind::BiDirac);
        let zs = candidate_times(&s).unwrap();
        assert_eq!(zs.first(), Some(&0.0));
        assert_eq!(zs.last(), Some(&s.time.t_bar));
        // Mass at the first interval: waiting until it ends is the last option.
        let s = reference::stochastic().with_duration(DurationKind::Dirac0);
        assert_eq!(candidate_times(&s).unwrap(), vec![0.0, s.time.delta]);
    }
}
