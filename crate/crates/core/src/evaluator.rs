//! Quasi-dynamic evaluation of mitigation plans.
//!
//! Time advances in steps of the simulation interval. Passengers arrive per
//! demand pattern, join a FIFO queue on one path of their OD according to the
//! assignment of the current phase, and board when every segment of the path
//! has capacity left in the interval. Boarding charges the path's ride and
//! headway cost at the fleets in service; mass still queued at the end of an
//! interval is charged `β γ I` per unit. After the horizon arrivals stop and
//! the queues drain under the normal assignment.
//!
//! Phases within a realization of duration `T`:
//! - before relocation is complete (or for good, if `T <= z`): the disrupted
//!   base assignment;
//! - from `z` plus the longest diversion until `T`: the plan's assignment;
//! - from `T`: the normal network and assignment at base fleets.
//!
//! Fleets leave their source line at `z` and join the target line after the
//! arc's diversion time.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::formulation::{QcqpInstance, ReferenceAssignments};
use crate::network::{LineKind, TransitNetwork};
use crate::scenario::{steps, Networks, Scenario};
use crate::solver::Solution;

/// Movement of `amount` vehicles between two lines of the disrupted network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relocation {
    pub from: usize,
    pub to: usize,
    pub amount: f64,
    /// Per vehicle, in $.
    pub unit_cost: f64,
    pub diversion_time: f64,
}

/// Everything an operator needs to carry out a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationPlan {
    pub label: String,
    /// Initiation time in minutes after onset.
    pub z: f64,
    /// Target fleets per disrupted-network line; lines at the floor read as 0.
    pub fleets: Vec<f64>,
    pub relocations: Vec<Relocation>,
    /// Recovery-period path shares on the disrupted network.
    pub shares: Vec<Vec<f64>>,
    pub references: ReferenceAssignments,
    /// `Σ c x` in $.
    pub relocation_cost: f64,
    /// Operator term of the model objective, in $.
    pub operator_cost: f64,
    /// Vehicles drawn from depots, unrounded.
    pub backup_vehicles: f64,
}

impl MitigationPlan {
    /// Plan that keeps every vehicle on its line and uses the disrupted base assignment.
    pub fn do_nothing(net: &TransitNetwork, references: &ReferenceAssignments) -> Self {
        Self {
            label: "do-nothing".into(),
            z: 0.0,
            fleets: net.lines.iter().map(|l| l.base_fleet).collect(),
            relocations: Vec::new(),
            shares: references.disrupted.shares.clone(),
            references: references.clone(),
            relocation_cost: 0.0,
            operator_cost: 0.0,
            backup_vehicles: 0.0,
        }
    }

    /// Backup vehicles rounded to the nearest whole vehicle.
    pub fn backup_count(&self) -> u64 {
        self.backup_vehicles.round().max(0.0) as u64
    }

    pub fn is_do_nothing(&self) -> bool {
        self.relocations.is_empty()
    }
}

const NEGLIGIBLE: f64 = 1e-9;

/// Reads a plan off a solved instance built on the disrupted network.
pub fn decode_plan(
    solution: &Solution,
    instance: &QcqpInstance,
    label: &str,
    z: f64,
    references: &ReferenceAssignments,
) -> Result<MitigationPlan> {
    if !solution.is_feasible() {
        return Err(Error::InconsistentPlan(format!("{label}: solution has no feasible point")));
    }
    let m = &instance.model;
    let fleets = instance
        .y_vars
        .iter()
        .enumerate()
        .map(|(l, &j)| {
            let y = solution.values[j];
            let floor = m.fleet_lower(l);
            if m.lines[l].kind != LineKind::Depot && y <= floor + NEGLIGIBLE {
                0.0
            } else {
                y
            }
        })
        .collect();
    let mut relocations = Vec::new();
    let mut backup_vehicles = 0.0;
    for (arc, &j) in m.arcs.iter().zip(&instance.x_vars) {
        let amount = solution.values[j];
        if amount <= NEGLIGIBLE {
            continue;
        }
        if m.lines[arc.from].kind == LineKind::Depot {
            backup_vehicles += amount;
        }
        relocations.push(Relocation {
            from: arc.from,
            to: arc.to,
            amount,
            unit_cost: arc.cost,
            diversion_time: arc.diversion_time,
        });
    }
    Ok(MitigationPlan {
        label: label.to_string(),
        z,
        fleets,
        relocation_cost: relocations.iter().map(|r| r.amount * r.unit_cost).sum(),
        relocations,
        shares: solution.shares(instance),
        references: references.clone(),
        operator_cost: instance.operator_dollars(&solution.values),
        backup_vehicles,
    })
}

/// User cost of one duration realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationCost {
    pub duration: f64,
    pub probability: f64,
    /// Ride and headway cost charged at boarding, in $.
    pub boarding_cost: f64,
    /// Queueing cost, in $.
    pub queue_cost: f64,
    pub arrivals: f64,
    pub boarded: f64,
    /// Mass still queued when arrivals stop.
    pub queued_at_horizon: f64,
    /// Mass still queued after draining; zero unless the drain limit was hit.
    pub final_queue: f64,
}

impl RealizationCost {
    pub fn user_cost(&self) -> f64 {
        self.boarding_cost + self.queue_cost
    }

    /// `arrivals - boarded - final_queue`.
    pub fn conservation_error(&self) -> f64 {
        self.arrivals - self.boarded - self.final_queue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub label: String,
    pub z: f64,
    /// `Σ_T g(T) usercost(T)`, in $.
    pub expected_user_cost: f64,
    /// Relocation cost weighted as in the objective and by the probability
    /// that relocation happens at all, in $.
    pub operator_cost: f64,
    pub total: f64,
    pub realizations: Vec<RealizationCost>,
    pub backup_vehicles: u64,
}

/// Intervals simulated after the horizon before giving up on draining.
const DRAIN_LIMIT: usize = 100_000;

/// Evaluates `plan` over the scenario's duration distribution.
pub fn evaluate(plan: &MitigationPlan, scenario: &Scenario, nets: &Networks) -> Result<EvaluationReport> {
    let sim = Simulator::new(plan, scenario, nets)?;
    let dist = scenario.duration()?;
    let mut realizations = Vec::new();
    for (t, g) in dist.atoms() {
        let mut r = sim.run(t)?;
        r.probability = g;
        realizations.push(r);
    }
    let expected_user_cost = realizations.iter().map(|r| r.probability * r.user_cost()).sum();
    let relocates = dist.survival_strict(plan.z);
    let operator_cost = 2.0 * scenario.costs.alpha * plan.relocation_cost * relocates;
    Ok(EvaluationReport {
        label: plan.label.clone(),
        z: plan.z,
        expected_user_cost,
        operator_cost,
        total: expected_user_cost + operator_cost,
        realizations,
        backup_vehicles: plan.backup_count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Disrupted,
    Recovery,
    Normal,
}

/// A queued parcel of passengers of one OD on one path.
#[derive(Debug, Clone, Copy)]
struct Parcel {
    stamp: usize,
    od: usize,
    path: usize,
    mass: f64,
}

struct Simulator<'a> {
    plan: &'a MitigationPlan,
    scenario: &'a Scenario,
    nets: &'a Networks,
    interval: f64,
    horizon_steps: usize,
    /// Recovery shares with unusable paths removed.
    recovery_shares: Vec<Vec<f64>>,
}

impl<'a> Simulator<'a> {
    fn new(plan: &'a MitigationPlan, scenario: &'a Scenario, nets: &'a Networks) -> Result<Self> {
        let interval = scenario.time.sim_interval;
        let horizon_steps = steps(scenario.time.t_bar, interval, "time.sim_interval")?;
        let net = &nets.disrupted;
        if plan.fleets.len() != net.lines.len() || plan.shares.len() != net.paths.len() {
            return Err(Error::InconsistentPlan(format!("plan `{}` does not match the disrupted network", plan.label)));
        }
        let mut recovery_shares = plan.shares.clone();
        for (w, shares) in recovery_shares.iter_mut().enumerate() {
            for (h, p) in shares.iter_mut().enumerate() {
                let path = &net.paths[w][h];
                if let Some(l) = path.boarded_lines(net).find(|&l| plan.fleets[l] < scenario.epsilon) {
                    if *p > 1e-6 {
                        return Err(Error::InconsistentPlan(format!(
                            "plan `{}` routes {:.3e} of OD {} over unserved line `{}`",
                            plan.label, p, net.ods[w], net.lines[l].id
                        )));
                    }
                    *p = 0.0;
                }
            }
            let sum: f64 = shares.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::InconsistentPlan(format!("plan `{}` assigns no path to OD {}", plan.label, net.ods[w])));
            }
            shares.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { plan, scenario, nets, interval, horizon_steps, recovery_shares })
    }

    fn phase(&self, t: f64, duration: f64) -> Phase {
        if t >= duration - 1e-9 {
            return Phase::Normal;
        }
        if self.plan.z < duration - 1e-9 {
            let ready = self.plan.z + self.plan.relocations.iter().map(|r| r.diversion_time).fold(0.0, f64::max);
            if t >= ready - 1e-9 {
                return Phase::Recovery;
            }
        }
        Phase::Disrupted
    }

    fn network(&self, phase: Phase) -> &TransitNetwork {
        match phase {
            Phase::Normal => &self.nets.normal,
            _ => &self.nets.disrupted,
        }
    }

    fn shares(&self, phase: Phase) -> &[Vec<f64>] {
        match phase {
            Phase::Disrupted => &self.plan.references.disrupted.shares,
            Phase::Recovery => &self.recovery_shares,
            Phase::Normal => &self.plan.references.normal.shares,
        }
    }

    /// Fleets in service at time `t` of a realization of length `duration`.
    fn fleets(&self, phase: Phase, t: f64, duration: f64) -> Vec<f64> {
        let net = self.network(phase);
        let mut y: Vec<f64> = net.lines.iter().map(|l| l.base_fleet).collect();
        if phase == Phase::Normal || self.plan.z >= duration - 1e-9 || t < self.plan.z - 1e-9 {
            return y;
        }
        for r in &self.plan.relocations {
            y[r.from] -= r.amount;
            if t >= self.plan.z + r.diversion_time - 1e-9 {
                y[r.to] += r.amount;
            }
        }
        // Lines left at the floor carry nobody.
        for (l, line) in net.lines.iter().enumerate() {
            if line.kind != LineKind::Depot && y[l] < self.scenario.epsilon {
                y[l] = 0.0;
            }
        }
        y
    }

    fn run(&self, duration: f64) -> Result<RealizationCost> {
        let beta = self.scenario.costs.beta;
        let gamma = self.scenario.costs.gamma;
        let t_bar = self.scenario.time.t_bar;
        let patterns = self.scenario.patterns();
        let mut queue: VecDeque<Parcel> = VecDeque::new();
        let mut out = RealizationCost {
            duration,
            probability: 1.0,
            boarding_cost: 0.0,
            queue_cost: 0.0,
            arrivals: 0.0,
            boarded: 0.0,
            queued_at_horizon: 0.0,
            final_queue: 0.0,
        };
        let mut current: Option<Phase> = None;
        let mut k = 0;
        loop {
            let t = k as f64 * self.interval;
            let in_horizon = k < self.horizon_steps;
            if !in_horizon {
                if k == self.horizon_steps {
                    out.queued_at_horizon = queue.iter().map(|p| p.mass).sum();
                }
                if queue.is_empty() || k >= self.horizon_steps + DRAIN_LIMIT {
                    break;
                }
            }
            let phase = self.phase(t, duration);
            let shares = self.shares(phase);
            if current.is_some_and(|c| c != phase) {
                queue = resplit(queue, shares);
            }
            current = Some(phase);
            if in_horizon {
                for (w, pat) in patterns.iter().enumerate() {
                    let mut q = pat.flow(t, t + self.interval, t_bar);
                    if k == 0 {
                        q += pat.initial_queue;
                    }
                    if q <= 0.0 {
                        continue;
                    }
                    out.arrivals += q;
                    split(&mut queue, k, w, q, &shares[w]);
                }
            }

            let net = self.network(phase);
            let fleets = self.fleets(phase, t, duration);
            let mut room: Vec<f64> = net
                .segments
                .iter()
                .map(|s| {
                    let line = &net.lines[s.line];
                    fleets[s.line] * line.vehicle_capacity * self.interval / line.round_trip_time
                })
                .collect();
            for parcel in queue.iter_mut() {
                let path = &net.paths[parcel.od][parcel.path];
                let cap = path.segments.iter().map(|&s| room[s]).fold(f64::INFINITY, f64::min);
                if cap <= 0.0 {
                    continue;
                }
                let mut take = parcel.mass.min(cap);
                if parcel.mass - take <= 1e-12 * parcel.mass.max(1.0) {
                    take = parcel.mass;
                }
                for &s in &path.segments {
                    room[s] = (room[s] - take).max(0.0);
                }
                let headway: f64 = path
                    .boarded_lines(net)
                    .map(|l| gamma * net.lines[l].round_trip_time / (2.0 * fleets[l]))
                    .sum();
                out.boarding_cost += beta * take * (path.run_time + headway);
                out.boarded += take;
                parcel.mass -= take;
            }
            queue.retain(|p| p.mass > 0.0);
            let waiting: f64 = queue.iter().map(|p| p.mass).sum();
            out.queue_cost += beta * gamma * self.interval * waiting;
            k += 1;
        }
        out.final_queue = queue.iter().map(|p| p.mass).sum();
        Ok(out)
    }
}

/// Pools each `(stamp, OD)` and splits it over the new phase's paths.
fn resplit(queue: VecDeque<Parcel>, shares: &[Vec<f64>]) -> VecDeque<Parcel> {
    let mut pooled: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for p in queue {
        *pooled.entry((p.stamp, p.od)).or_insert(0.0) += p.mass;
    }
    let mut out = VecDeque::new();
    for ((stamp, od), mass) in pooled {
        split(&mut out, stamp, od, mass, &shares[od]);
    }
    out
}

/// Appends `mass` of OD `od` split by `shares`; the last used path takes the
/// rounding remainder so no mass is lost.
fn split(queue: &mut VecDeque<Parcel>, stamp: usize, od: usize, mass: f64, shares: &[f64]) {
    let last = shares.iter().rposition(|&p| p > 0.0);
    let mut left = mass;
    for (path, &p) in shares.iter().enumerate().filter(|(_, p)| **p > 0.0) {
        let part = if Some(path) == last { left } else { mass * p };
        left -= part;
        queue.push_back(Parcel { stamp, od, path, mass: part });
    }
}

#[cfg(test)]
mod tests;
