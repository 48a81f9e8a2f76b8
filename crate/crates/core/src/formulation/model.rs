use crate::error::{Error, Result};
use crate::network::LineKind;
use crate::scenario::ArcClass;
use crate::solver::lp::Sense;

use super::{
    BilinearTerm, ConstraintFamily, Coupling, ModelKind, QcqpInstance, Row, StrategyFamily, VarKind, Variable,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLine {
    pub id: String,
    pub mode: String,
    pub kind: LineKind,
    pub round_trip_time: f64,
    pub base_fleet: f64,
    pub max_fleet: f64,
    pub capacity: f64,
}

impl ModelLine {
    /// A regular line; convenient for hand-built instances.
    pub fn regular(id: &str, round_trip_time: f64, base_fleet: f64, max_fleet: f64, capacity: f64) -> Self {
        Self {
            id: id.to_string(),
            mode: "m".to_string(),
            kind: LineKind::Regular,
            round_trip_time,
            base_fleet,
            max_fleet,
            capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSegment {
    pub id: String,
    pub line: usize,
    pub run_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPath {
    pub segments: Vec<usize>,
    /// Boarded line indices, one per boarding.
    pub boardings: Vec<usize>,
    pub run_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOd {
    pub label: String,
    /// Passengers whose travel time enters the objective.
    pub weight: f64,
    /// Passengers loaded onto segments in the capacity rows.
    pub load: f64,
    pub paths: Vec<ModelPath>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArc {
    pub from: usize,
    pub to: usize,
    /// Unit cost in $.
    pub cost: f64,
    /// Minutes a relocated vehicle spends in transit.
    pub diversion_time: f64,
    pub class: ArcClass,
    pub family: StrategyFamily,
}

/// Lines, weighted OD paths and relocation arcs; everything an instance needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationModel {
    pub lines: Vec<ModelLine>,
    pub segments: Vec<ModelSegment>,
    pub ods: Vec<ModelOd>,
    pub arcs: Vec<ModelArc>,
    pub gamma: f64,
    /// Minutes of service the capacity rows cover; no rows when zero.
    pub window: f64,
    /// Multiplier on `Σ c x` in the objective.
    pub operator_weight: f64,
    pub epsilon: f64,
    pub constant: f64,
}

impl AllocationModel {
    /// Right-hand side of a line's conservation row: zero-base lines keep
    /// their `ε` floor without any relocation.
    pub fn conservation_rhs(&self, line: usize) -> f64 {
        let l = &self.lines[line];
        if l.kind != LineKind::Depot && l.base_fleet <= 0.0 {
            self.epsilon
        } else {
            l.base_fleet
        }
    }

    pub fn fleet_lower(&self, line: usize) -> f64 {
        if self.lines[line].kind == LineKind::Depot {
            0.0
        } else {
            self.epsilon
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        for l in &self.lines {
            if l.kind != LineKind::Depot {
                if !(l.round_trip_time > 0.0) {
                    return Err(Error::NonPositiveTime(format!("round trip of line `{}`", l.id)));
                }
                if !(l.max_fleet >= self.epsilon) {
                    return Err(Error::InvalidFleet(l.id.clone(), "max fleet below epsilon".into()));
                }
            }
            if !(l.base_fleet >= 0.0 && l.base_fleet <= l.max_fleet) {
                return Err(Error::InvalidFleet(l.id.clone(), "need 0 <= base_fleet <= max_fleet".into()));
            }
        }
        for a in &self.arcs {
            if a.from == a.to {
                return Err(Error::InvalidParameter(format!("self arc on line `{}`", self.lines[a.from].id)));
            }
            if self.lines[a.from].mode != self.lines[a.to].mode {
                return Err(Error::CrossModeArc(self.lines[a.from].id.clone(), self.lines[a.to].id.clone()));
            }
            if !(a.cost >= 0.0) {
                return Err(Error::InvalidParameter("negative relocation cost".into()));
            }
        }
        for od in &self.ods {
            if od.paths.is_empty() {
                return Err(Error::Disconnected { origin: od.label.clone(), destination: String::new() });
            }
            if !(od.weight >= 0.0 && od.load >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative demand for OD {}", od.label)));
            }
        }
        Ok(())
    }

    pub fn to_instance(&self) -> Result<QcqpInstance> {
        self.validate()?;
        let mut vars = Vec::new();
        let mut objective = Vec::new();
        let mut push = |kind: VarKind, name: String, lower: f64, upper: f64, cost: f64| {
            vars.push(Variable { kind, name, lower, upper });
            objective.push(cost);
            vars.len() - 1
        };

        let mut p_vars = Vec::new();
        for (w, od) in self.ods.iter().enumerate() {
            let cols: Vec<usize> = od
                .paths
                .iter()
                .enumerate()
                .map(|(h, path)| {
                    push(VarKind::PathShare { od: w, path: h }, format!("p[{}#{h}]", od.label), 0.0, 1.0, od.weight * path.run_time)
                })
                .collect();
            p_vars.push(cols);
        }
        let y_vars: Vec<usize> = self
            .lines
            .iter()
            .enumerate()
            .map(|(l, line)| push(VarKind::Fleet { line: l }, format!("y[{}]", line.id), self.fleet_lower(l), line.max_fleet, 0.0))
            .collect();
        let mut boarded = vec![false; self.lines.len()];
        for path in self.ods.iter().flat_map(|o| &o.paths) {
            for &l in &path.boardings {
                boarded[l] = true;
            }
        }
        let u_vars: Vec<Option<usize>> = self
            .lines
            .iter()
            .enumerate()
            .map(|(l, line)| {
                boarded[l].then(|| {
                    push(
                        VarKind::Inverse { line: l },
                        format!("u[{}]", line.id),
                        1.0 / line.max_fleet,
                        1.0 / self.epsilon,
                        0.0,
                    )
                })
            })
            .collect();
        let mode_fleet = |mode: &str| -> f64 {
            self.lines.iter().enumerate().filter(|(_, l)| l.mode == mode).map(|(i, _)| self.conservation_rhs(i)).sum()
        };
        let x_vars: Vec<usize> = self
            .arcs
            .iter()
            .enumerate()
            .map(|(a, arc)| {
                let name = format!("x[{}>{}]", self.lines[arc.from].id, self.lines[arc.to].id);
                let cap = mode_fleet(&self.lines[arc.from].mode);
                push(VarKind::Relocation { arc: a }, name, 0.0, cap, self.operator_weight * arc.cost)
            })
            .collect();

        let mut bilinear = Vec::new();
        for (w, od) in self.ods.iter().enumerate() {
            for (h, path) in od.paths.iter().enumerate() {
                for &l in &path.boardings {
                    let coef = od.weight * self.gamma * self.lines[l].round_trip_time / 2.0;
                    if coef != 0.0 {
                        bilinear.push(BilinearTerm { coef, p: p_vars[w][h], u: u_vars[l].expect("boarded line") });
                    }
                }
            }
        }

        let mut rows = Vec::new();
        if self.window > 0.0 {
            for (s, seg) in self.segments.iter().enumerate() {
                let line = &self.lines[seg.line];
                // Scaled by R / (K T) so the fleet coefficient is one.
                let scale = line.round_trip_time / (line.capacity * self.window);
                let mut coeffs = Vec::new();
                for (w, od) in self.ods.iter().enumerate() {
                    if od.load <= 0.0 {
                        continue;
                    }
                    for (h, path) in od.paths.iter().enumerate() {
                        if path.segments.contains(&s) {
                            coeffs.push((p_vars[w][h], od.load * scale));
                        }
                    }
                }
                if coeffs.is_empty() {
                    continue;
                }
                coeffs.push((y_vars[seg.line], -1.0));
                rows.push(Row {
                    coeffs,
                    sense: Sense::Le,
                    rhs: 0.0,
                    family: ConstraintFamily::SegmentCapacity,
                    owner: s,
                    label: seg.id.clone(),
                });
            }
        }
        for (l, line) in self.lines.iter().enumerate() {
            let mut coeffs = vec![(y_vars[l], 1.0)];
            for (a, arc) in self.arcs.iter().enumerate() {
                if arc.from == l {
                    coeffs.push((x_vars[a], 1.0));
                }
                if arc.to == l {
                    coeffs.push((x_vars[a], -1.0));
                }
            }
            rows.push(Row {
                coeffs,
                sense: Sense::Eq,
                rhs: self.conservation_rhs(l),
                family: ConstraintFamily::FleetConservation,
                owner: l,
                label: line.id.clone(),
            });
        }
        rows.push(Row {
            coeffs: y_vars.iter().map(|&j| (j, 1.0)).collect(),
            sense: Sense::Eq,
            rhs: (0..self.lines.len()).map(|l| self.conservation_rhs(l)).sum(),
            family: ConstraintFamily::TotalFleet,
            owner: 0,
            label: "total".into(),
        });
        for (w, od) in self.ods.iter().enumerate() {
            rows.push(Row {
                coeffs: p_vars[w].iter().map(|&j| (j, 1.0)).collect(),
                sense: Sense::Eq,
                rhs: 1.0,
                family: ConstraintFamily::PathChoice,
                owner: w,
                label: od.label.clone(),
            });
        }
        let couplings = self
            .lines
            .iter()
            .enumerate()
            .filter_map(|(l, _)| u_vars[l].map(|u| Coupling { u, y: y_vars[l] }))
            .collect();

        Ok(QcqpInstance {
            vars,
            objective,
            constant: self.constant,
            bilinear,
            rows,
            couplings,
            p_vars,
            y_vars,
            u_vars,
            x_vars,
            model: self.clone(),
            kind: ModelKind::Abstract,
            family: StrategyFamily::Bm,
            beta: 1.0,
        })
    }
}
