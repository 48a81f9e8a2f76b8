//! QCQP instances for the fixed-duration model and the initiation-time
//! subproblem, plus strategy-family restrictions.
//!
//! Scenario builders first assemble an [`AllocationModel`], a small
//! network-free description of lines, weighted OD paths and relocation arcs,
//! and then lower it to a [`QcqpInstance`]. Tests build allocation models
//! directly.

mod model;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EmergencyRole, Line, LineKind, TransitNetwork};
use crate::scenario::{ArcClass, CostSpec, RelocationCost, Scenario};
use crate::solver::lp::Sense;

pub use model::{AllocationModel, ModelArc, ModelLine, ModelOd, ModelPath, ModelSegment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyFamily {
    /// Line-level adjustment: short-turns and user diversion only.
    #[serde(rename = "LLA")]
    Lla,
    /// Adds bus bridging from depots and bus lines.
    #[serde(rename = "BB")]
    Bb,
    /// Any within-mode exchange.
    #[serde(rename = "BM")]
    Bm,
}

impl StrategyFamily {
    pub const ALL: [StrategyFamily; 3] = [Self::Lla, Self::Bb, Self::Bm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lla => "LLA",
            Self::Bb => "BB",
            Self::Bm => "BM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LLA" => Some(Self::Lla),
            "BB" => Some(Self::Bb),
            "BM" => Some(Self::Bm),
            _ => None,
        }
    }

    pub fn allows(self, arc_family: StrategyFamily) -> bool {
        arc_family <= self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintFamily {
    SegmentCapacity,
    FleetConservation,
    TotalFleet,
    PathChoice,
}

impl ConstraintFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::SegmentCapacity => "SegmentCapacity",
            Self::FleetConservation => "FleetConservation",
            Self::TotalFleet => "TotalFleet",
            Self::PathChoice => "PathChoice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    PathShare { od: usize, path: usize },
    Fleet { line: usize },
    /// `1 / y` of a boarded line.
    Inverse { line: usize },
    Relocation { arc: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub family: ConstraintFamily,
    /// Segment, line or OD index the row belongs to.
    pub owner: usize,
    pub label: String,
}

impl Row {
    pub fn activity(&self, v: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * v[j]).sum()
    }

    /// Amount by which `v` violates the row, zero when satisfied.
    pub fn violation(&self, v: &[f64]) -> f64 {
        let lhs = self.activity(v);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `coef * v[p] * v[u]` in the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTerm {
    pub coef: f64,
    pub p: usize,
    pub u: usize,
}

/// `v[u] * v[y] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub u: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Fixed disruption duration.
    Fixed { duration: f64 },
    /// Initiation-time subproblem at a fixed `z`.
    Initiation { z: f64, survival: f64, conditional_end: Option<f64> },
    /// Built directly from an allocation model.
    Abstract,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    pub vars: Vec<Variable>,
    pub objective: Vec<f64>,
    pub constant: f64,
    pub bilinear: Vec<BilinearTerm>,
    pub rows: Vec<Row>,
    pub couplings: Vec<Coupling>,
    pub p_vars: Vec<Vec<usize>>,
    pub y_vars: Vec<usize>,
    pub u_vars: Vec<Option<usize>>,
    pub x_vars: Vec<usize>,
    pub model: AllocationModel,
    pub kind: ModelKind,
    pub family: StrategyFamily,
    /// Value of time used to convert minutes to $.
    pub beta: f64,
}

impl QcqpInstance {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.upper).collect()
    }

    pub fn is_inverse(&self, j: usize) -> bool {
        matches!(self.vars[j].kind, VarKind::Inverse { .. })
    }

    /// Objective with `u` read from `v` as given.
    pub fn objective_value(&self, v: &[f64]) -> f64 {
        let lin: f64 = self.objective.iter().zip(v).map(|(c, x)| c * x).sum();
        let bil: f64 = self.bilinear.iter().map(|t| t.coef * v[t.p] * v[t.u]).sum();
        self.constant + lin + bil
    }

    /// Copy of `v` with every `u` reset to `1 / y`.
    pub fn with_exact_inverses(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for c in &self.couplings {
            out[c.u] = 1.0 / v[c.y];
        }
        out
    }

    /// User cost in minutes, constant part included.
    pub fn user_minutes(&self, v: &[f64]) -> f64 {
        let lin: f64 = self.p_vars.iter().flatten().map(|&j| self.objective[j] * v[j]).sum();
        let bil: f64 = self.bilinear.iter().map(|t| t.coef * v[t.p] * v[t.u]).sum();
        self.constant + lin + bil
    }

    /// Weighted operator cost in $.
    pub fn operator_dollars(&self, v: &[f64]) -> f64 {
        self.beta * self.x_vars.iter().map(|&j| self.objective[j] * v[j]).sum::<f64>()
    }

    /// Unweighted relocation cost `Σ c x` in $.
    pub fn relocation_cost(&self, v: &[f64]) -> f64 {
        self.model.arcs.iter().zip(&self.x_vars).map(|(a, &j)| a.cost * v[j]).sum()
    }

    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(v)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(v)
            .filter(|(var, _)| !matches!(var.kind, VarKind::Inverse { .. }))
            .map(|(var, &x)| (var.lower - x).max(x - var.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Maps every model symbol onto instance elements and lists anything missing.
    pub fn audit(&self) -> AuditReport {
        let m = &self.model;
        let mut gaps = Vec::new();
        let count = |family: ConstraintFamily| self.rows.iter().filter(|r| r.family == family).count();
        let cap_rows = count(ConstraintFamily::SegmentCapacity);
        let cons_rows = count(ConstraintFamily::FleetConservation);
        let total_rows = count(ConstraintFamily::TotalFleet);
        let choice_rows = count(ConstraintFamily::PathChoice);
        if m.window > 0.0 {
            for (s, seg) in m.segments.iter().enumerate() {
                let used = m.ods.iter().any(|od| od.load > 0.0 && od.paths.iter().any(|p| p.segments.contains(&s)));
                let has = self.rows.iter().any(|r| r.family == ConstraintFamily::SegmentCapacity && r.owner == s);
                if used && !has {
                    gaps.push(format!("segment {} has no capacity row", seg.id));
                }
            }
        }
        for (l, line) in m.lines.iter().enumerate() {
            if !self.rows.iter().any(|r| r.family == ConstraintFamily::FleetConservation && r.owner == l) {
                gaps.push(format!("line {} has no conservation row", line.id));
            }
            let boarded = m.ods.iter().flat_map(|o| &o.paths).any(|p| p.boardings.contains(&l));
            match self.u_vars[l] {
                Some(u) if !self.couplings.iter().any(|c| c.u == u && c.y == self.y_vars[l]) => {
                    gaps.push(format!("line {} has an inverse without coupling", line.id))
                }
                None if boarded => gaps.push(format!("boarded line {} has no inverse", line.id)),
                _ => {}
            }
        }
        for (w, od) in m.ods.iter().enumerate() {
            if !self.rows.iter().any(|r| r.family == ConstraintFamily::PathChoice && r.owner == w) {
                gaps.push(format!("OD {} has no path-choice row", od.label));
            }
        }
        if total_rows != 1 {
            gaps.push(format!("expected one total-fleet row, found {total_rows}"));
        }
        let n = self.vars.len();
        for t in &self.bilinear {
            if t.p >= n || t.u >= n || !self.is_inverse(t.u) {
                gaps.push(format!("bilinear term references invalid variables ({}, {})", t.p, t.u));
            }
        }
        for r in &self.rows {
            if r.coeffs.iter().any(|&(j, _)| j >= n) {
                gaps.push(format!("row {} references an undeclared variable", r.label));
            }
        }
        let entries = vec![
            ("path shares".to_string(), self.p_vars.iter().map(Vec::len).sum()),
            ("fleets".to_string(), self.y_vars.len()),
            ("inverse fleets".to_string(), self.u_vars.iter().flatten().count()),
            ("relocations".to_string(), self.x_vars.len()),
            (ConstraintFamily::SegmentCapacity.name().to_string(), cap_rows),
            (ConstraintFamily::FleetConservation.name().to_string(), cons_rows),
            (ConstraintFamily::TotalFleet.name().to_string(), total_rows),
            (ConstraintFamily::PathChoice.name().to_string(), choice_rows),
            ("FleetBound (variable bounds)".to_string(), self.y_vars.len()),
            ("couplings".to_string(), self.couplings.len()),
        ];
        AuditReport { entries, gaps }
    }

    /// Human-readable listing of the instance, rows tagged by family.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind: {:?}  family: {}", self.kind, self.family.name());
        let _ = writeln!(out, "objective constant: {:.6}", self.constant);
        let _ = writeln!(out, "variables:");
        for (j, v) in self.vars.iter().enumerate() {
            let _ = writeln!(out, "  [{j}] {} in [{}, {}] cost {}", v.name, v.lower, v.upper, self.objective[j]);
        }
        let _ = writeln!(out, "bilinear terms:");
        for t in &self.bilinear {
            let _ = writeln!(out, "  {:.6} * {} * {}", t.coef, self.vars[t.p].name, self.vars[t.u].name);
        }
        let _ = writeln!(out, "rows:");
        for r in &self.rows {
            let terms: Vec<String> =
                r.coeffs.iter().map(|&(j, a)| format!("{a:+.6} {}", self.vars[j].name)).collect();
            let sense = match r.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, "  {:<18} {}: {} {sense} {}", r.family.name(), r.label, terms.join(" "), r.rhs);
        }
        let _ = writeln!(out, "couplings:");
        for c in &self.couplings {
            let _ = writeln!(out, "  {} * {} = 1", self.vars[c.u].name, self.vars[c.y].name);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub entries: Vec<(String, usize)>,
    pub gaps: Vec<String>,
}

impl AuditReport {
    pub fn is_complete(&self) -> bool {
        self.gaps.is_empty()
    }
}

/// Fixes every relocation outside `family` to zero.
pub fn restrict(instance: &QcqpInstance, family: StrategyFamily) -> QcqpInstance {
    let mut out = instance.clone();
    for (arc, &j) in instance.model.arcs.iter().zip(&instance.x_vars) {
        if !family.allows(arc.family) {
            out.vars[j].upper = 0.0;
            out.vars[j].lower = 0.0;
        }
    }
    out.family = family;
    out
}

/// Cost class of moving a vehicle from `from` to `to`.
pub fn arc_class(from: &Line, to: &Line) -> ArcClass {
    if from.kind == LineKind::Depot {
        ArcClass::BackupTransfer
    } else if to.role == Some(EmergencyRole::ShortTurn) && to.parent.as_deref() == Some(from.id.as_str()) {
        ArcClass::ShortTurn
    } else {
        ArcClass::LineTransfer
    }
}

/// Smallest strategy family that contains the arc.
pub fn arc_family(from: &Line, to: &Line) -> StrategyFamily {
    match arc_class(from, to) {
        ArcClass::ShortTurn => StrategyFamily::Lla,
        _ if to.role == Some(EmergencyRole::Bridging) => StrategyFamily::Bb,
        _ => StrategyFamily::Bm,
    }
}

/// Unit relocation cost in $ and the diversion time in minutes.
pub fn relocation_cost(from: &Line, to: &Line, costs: &CostSpec) -> Result<(f64, f64)> {
    if from.mode != to.mode {
        return Err(Error::CrossModeArc(from.id.clone(), to.id.clone()));
    }
    let class = arc_class(from, to);
    let rc: RelocationCost = costs.relocation.get(&from.mode).and_then(|m| m.get(class)).ok_or_else(|| {
        Error::InvalidParameter(format!("no {class:?} relocation cost for mode `{}`", from.mode))
    })?;
    Ok((rc.total(), rc.diversion_time()))
}

/// Per-OD path shares and path costs at the base fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub shares: Vec<Vec<f64>>,
    pub path_costs: Vec<Vec<f64>>,
}

impl Assignment {
    /// Share-weighted path cost of OD `w`.
    pub fn mean_cost(&self, w: usize) -> f64 {
        self.shares[w].iter().zip(&self.path_costs[w]).map(|(p, c)| p * c).sum()
    }
}

/// Assignments of the undisrupted (`normal`) and the disrupted, unrelocated (`disrupted`) systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAssignments {
    pub normal: Assignment,
    pub disrupted: Assignment,
}

fn relocation_arcs(net: &TransitNetwork, costs: &CostSpec) -> Result<Vec<ModelArc>> {
    let mut arcs = Vec::new();
    for (a, from) in net.lines.iter().enumerate() {
        if from.kind == LineKind::Emergency || from.base_fleet <= 0.0 {
            continue;
        }
        for (b, to) in net.lines.iter().enumerate() {
            if a == b || to.kind == LineKind::Depot || to.mode != from.mode {
                continue;
            }
            let (cost, diversion_time) = relocation_cost(from, to, costs)?;
            arcs.push(ModelArc {
                from: a,
                to: b,
                cost,
                diversion_time,
                class: arc_class(from, to),
                family: arc_family(from, to),
            });
        }
    }
    Ok(arcs)
}

/// Allocation model skeleton on `net` with zero OD weights.
pub fn skeleton(net: &TransitNetwork, scenario: &Scenario) -> Result<AllocationModel> {
    let lines = net
        .lines
        .iter()
        .map(|l| ModelLine {
            id: l.id.clone(),
            mode: l.mode.clone(),
            kind: l.kind,
            round_trip_time: l.round_trip_time,
            base_fleet: l.base_fleet,
            max_fleet: l.max_fleet,
            capacity: l.vehicle_capacity,
        })
        .collect();
    let segments = net
        .segments
        .iter()
        .map(|s| ModelSegment { id: s.id.clone(), line: s.line, run_time: s.run_time })
        .collect();
    let ods = net
        .ods
        .iter()
        .zip(&net.paths)
        .map(|(od, paths)| ModelOd {
            label: od.to_string(),
            weight: 0.0,
            load: 0.0,
            paths: paths
                .iter()
                .map(|p| ModelPath {
                    segments: p.segments.clone(),
                    boardings: p.boarded_lines(net).collect(),
                    run_time: p.run_time,
                })
                .collect(),
        })
        .collect();
    Ok(AllocationModel {
        lines,
        segments,
        ods,
        arcs: relocation_arcs(net, &scenario.costs)?,
        gamma: scenario.costs.gamma,
        window: 0.0,
        operator_weight: 2.0 * scenario.costs.alpha / scenario.costs.beta,
        epsilon: scenario.epsilon,
        constant: 0.0,
    })
}

/// Fixed-duration model on the disrupted network for duration `t`.
pub fn build_bm(net: &TransitNetwork, scenario: &Scenario, t: f64) -> Result<QcqpInstance> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("duration must be positive, got {t}")));
    }
    let mut model = skeleton(net, scenario)?;
    let q = scenario.demand(0.0, t);
    for (od, qw) in model.ods.iter_mut().zip(q) {
        od.weight = qw;
        od.load = qw;
    }
    model.window = t;
    let mut inst = model.to_instance()?;
    inst.kind = ModelKind::Fixed { duration: t };
    inst.beta = scenario.costs.beta;
    Ok(inst)
}

/// Initiation-time subproblem at fixed `z`.
///
/// Relocation happens only in realizations with `T > z`; a disruption that
/// ends exactly at `z` is treated as never relocated.
pub fn build_itm_subproblem(
    net: &TransitNetwork,
    scenario: &Scenario,
    z: f64,
    refs: &ReferenceAssignments,
) -> Result<QcqpInstance> {
    let dist = scenario.duration()?;
    let t_bar = scenario.time.t_bar;
    if z < 0.0 || z > t_bar + 1e-9 || dist.survival(z) <= 0.0 {
        return Err(Error::InitiationBeyondSupport(z));
    }
    let patterns = scenario.patterns();
    let mut model = skeleton(net, scenario)?;
    let survival = dist.survival_strict(z);
    let end = dist.conditional_mean_after(z);
    let at_zero = z <= 0.0;
    let mut constant = 0.0;
    for (w, (od, pat)) in model.ods.iter_mut().zip(&patterns).enumerate() {
        let q0 = pat.initial_queue;
        let c_d = refs.disrupted.mean_cost(w);
        let c_n = refs.normal.mean_cost(w);
        let mut weight = 0.0;
        for (t, g) in dist.atoms() {
            let after = pat.flow(t, t_bar, t_bar) * c_n;
            if t > z + 1e-9 {
                let pre = if at_zero { 0.0 } else { (pat.flow(0.0, z, t_bar) + q0) * c_d };
                constant += g * (pre + after);
                weight += g * (pat.flow(z, t, t_bar) + if at_zero { q0 } else { 0.0 });
            } else {
                constant += g * ((pat.flow(0.0, t, t_bar) + q0) * c_d + after);
            }
        }
        od.weight = weight;
        od.load = match end {
            Some(e) => pat.flow(z, e, t_bar) + if at_zero { q0 } else { 0.0 },
            None => 0.0,
        };
    }
    model.window = end.map_or(0.0, |e| e - z);
    model.operator_weight *= survival;
    model.constant = constant;
    let mut inst = model.to_instance()?;
    if survival <= 0.0 {
        for &j in &inst.x_vars {
            inst.vars[j].upper = 0.0;
        }
    }
    inst.kind = ModelKind::Initiation { z, survival, conditional_end: end };
    inst.beta = scenario.costs.beta;
    Ok(inst)
}

/// Whether the base fleet admits a path assignment within capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusQuoProbe {
    pub feasible: bool,
    /// Largest capacity-row overload at the best assignment, in fleet units.
    pub max_overload: f64,
}

/// Checks the status-quo point `x = 0, y = y0` for a capacity-feasible assignment.
pub fn status_quo_probe(instance: &QcqpInstance) -> Result<StatusQuoProbe> {
    use crate::solver::lp::LinearProgram;
    let m = &instance.model;
    let mut lp = LinearProgram::new();
    let mut p_cols = Vec::new();
    for od in &m.ods {
        let cols: Vec<usize> = od
            .paths
            .iter()
            .map(|path| {
                let served = path.boardings.iter().all(|&l| m.lines[l].base_fleet > 0.0);
                lp.add_var(0.0, 0.0, if served { 1.0 } else { 0.0 })
            })
            .collect();
        lp.add_constraint(cols.iter().map(|&c| (c, 1.0)).collect(), Sense::Eq, 1.0);
        p_cols.push(cols);
    }
    let mut overload_cols = Vec::new();
    for r in instance.rows.iter().filter(|r| r.family == ConstraintFamily::SegmentCapacity) {
        let e = lp.add_var(1.0, 0.0, f64::INFINITY);
        overload_cols.push(e);
        let mut coeffs = vec![(e, -1.0)];
        let mut rhs = 0.0;
        for &(j, a) in &r.coeffs {
            match instance.vars[j].kind {
                VarKind::PathShare { od, path } => coeffs.push((p_cols[od][path], a)),
                VarKind::Fleet { line } => rhs -= a * m.lines[line].base_fleet,
                _ => {}
            }
        }
        lp.add_constraint(coeffs, Sense::Le, rhs);
    }
    let sol = lp.solve().map_err(|e| Error::Infeasible(format!("status-quo probe: {e}")))?;
    let max_overload = overload_cols.iter().map(|&c| sol.x[c]).fold(0.0, f64::max);
    Ok(StatusQuoProbe { feasible: max_overload <= 1e-9, max_overload })
}

#[cfg(test)]
mod tests;
