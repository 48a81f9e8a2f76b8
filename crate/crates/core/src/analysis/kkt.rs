//! First-order optimality audit with inverses eliminated.
//!
//! Multipliers are fitted, never read from the solver: an LP picks the
//! multipliers of the active constraints that minimize the L1 norm of the
//! Lagrangian gradient. Everything here is therefore an estimate, and a
//! report with zero residuals certifies a KKT point of the reduced problem.

use std::fmt;

use crate::error::{Error, Result};
use crate::formulation::{ConstraintFamily, QcqpInstance, VarKind};
use crate::network::LineKind;
use crate::solver::local::reduced_gradient;
use crate::solver::lp::{LinearProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    PathShares,
    Fleets,
    Relocations,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Self::PathShares => "path shares",
            Self::Fleets => "fleets",
            Self::Relocations => "relocations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResidual {
    pub block: Block,
    pub max: f64,
    pub mean: f64,
}

/// Generalized cost of a used path against the cheapest path of its OD.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCostCheck {
    pub od: usize,
    pub path: usize,
    pub share: f64,
    /// Travel and wait cost plus capacity prices along the path.
    pub cost: f64,
    pub cheapest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Always true: multipliers come from a fit, not from the solver.
    pub estimated: bool,
    pub stationarity: Vec<BlockResidual>,
    /// Largest `|μ g|` over capacity rows and fleet bounds.
    pub complementarity: f64,
    /// Largest negative part of an inequality multiplier; zero by construction of the fit.
    pub sign_violation: f64,
    /// Multiplier per instance row; zero for rows left inactive.
    pub row_multipliers: Vec<f64>,
    pub path_costs: Vec<PathCostCheck>,
    /// Stationarity residual of every operated emergency line.
    pub emergency_lines: Vec<(String, f64)>,
    /// Lines at the fleet floor that still carry boardings.
    pub unserved_boardings: Vec<String>,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.iter().map(|b| b.max).fold(0.0, f64::max)
    }

    pub fn mean_residual(&self) -> f64 {
        let n = self.stationarity.len().max(1) as f64;
        self.stationarity.iter().map(|b| b.mean).sum::<f64>() / n
    }

    /// Largest spread between a used path's cost and its OD's cheapest path.
    pub fn path_cost_spread(&self) -> f64 {
        self.path_costs.iter().map(|c| (c.cost - c.cheapest).abs()).fold(0.0, f64::max)
    }

    pub fn block(&self, block: Block) -> Option<&BlockResidual> {
        self.stationarity.iter().find(|b| b.block == block)
    }
}

impl fmt::Display for KktReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "first-order audit (estimated multipliers)")?;
        for b in &self.stationarity {
            writeln!(f, "  stationarity[{}]: max {:.3e}, mean {:.3e}", b.block.name(), b.max, b.mean)?;
        }
        writeln!(f, "  complementarity: {:.3e}", self.complementarity)?;
        writeln!(f, "  sign violation: {:.3e}", self.sign_violation)?;
        writeln!(f, "  used-path cost spread: {:.3e}", self.path_cost_spread())?;
        for (line, r) in &self.emergency_lines {
            writeln!(f, "  emergency line {line}: residual {r:.3e}")?;
        }
        for line in &self.unserved_boardings {
            writeln!(f, "  line {line} is at its floor but carries boardings")?;
        }
        Ok(())
    }
}

const ACTIVE_TOL: f64 = 1e-7;
const USED: f64 = 1e-6;

/// Audits `values` (a feasible point of `instance`) for first-order optimality.
pub fn kkt_residuals(instance: &QcqpInstance, values: &[f64]) -> Result<KktReport> {
    let n = instance.num_vars();
    if values.len() != n {
        return Err(Error::InvalidParameter(format!("expected {n} values, got {}", values.len())));
    }
    let z = instance.with_exact_inverses(values);
    let grad = reduced_gradient(instance, &z);
    let primal: Vec<usize> = (0..n).filter(|&j| !instance.is_inverse(j)).collect();

    let mut lp = LinearProgram::new();
    // Stationarity rows, one per primal variable, filled as multipliers are added.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut mult = vec![None; instance.rows.len()];
    let mut slack = vec![0.0; instance.rows.len()];
    for (i, r) in instance.rows.iter().enumerate() {
        let g = r.activity(&z) - r.rhs;
        slack[i] = g;
        let scale = r.rhs.abs().max(1.0);
        let (lo, hi, sign) = match r.sense {
            Sense::Eq => (f64::NEG_INFINITY, f64::INFINITY, 1.0),
            Sense::Le if g.abs() <= ACTIVE_TOL * scale => (0.0, f64::INFINITY, 1.0),
            Sense::Ge if g.abs() <= ACTIVE_TOL * scale => (0.0, f64::INFINITY, -1.0),
            _ => continue,
        };
        let m = lp.add_var(0.0, lo, hi);
        mult[i] = Some((m, sign));
        for &(j, a) in &r.coeffs {
            rows[j].push((m, sign * a));
        }
    }
    let mut bound_mult = Vec::new();
    for &j in &primal {
        let v = &instance.vars[j];
        let tol = ACTIVE_TOL * v.lower.abs().max(v.upper.abs()).max(1.0);
        if z[j] - v.lower <= tol {
            let m = lp.add_var(0.0, 0.0, f64::INFINITY);
            rows[j].push((m, -1.0));
            bound_mult.push((j, m, z[j] - v.lower));
        }
        if v.upper - z[j] <= tol && v.upper > v.lower {
            let m = lp.add_var(0.0, 0.0, f64::INFINITY);
            rows[j].push((m, 1.0));
            bound_mult.push((j, m, v.upper - z[j]));
        }
    }
    let mut resid = vec![usize::MAX; n];
    for &j in &primal {
        let pos = lp.add_var(1.0, 0.0, f64::INFINITY);
        let neg = lp.add_var(1.0, 0.0, f64::INFINITY);
        resid[j] = pos;
        let mut coeffs = rows[j].clone();
        coeffs.push((pos, -1.0));
        coeffs.push((neg, 1.0));
        // grad + Σ multipliers = pos - neg
        lp.add_constraint(coeffs, Sense::Eq, -grad[j]);
    }
    let sol = lp.solve().map_err(|e| Error::SolverFailure(format!("multiplier fit: {e}")))?;
    let r_of = |j: usize| sol.x[resid[j]] - sol.x[resid[j] + 1];

    let block_of = |j: usize| match instance.vars[j].kind {
        VarKind::PathShare { .. } => Some(Block::PathShares),
        VarKind::Fleet { .. } => Some(Block::Fleets),
        VarKind::Relocation { .. } => Some(Block::Relocations),
        VarKind::Inverse { .. } => None,
    };
    let mut stationarity = Vec::new();
    for block in [Block::PathShares, Block::Fleets, Block::Relocations] {
        let vals: Vec<f64> = primal.iter().filter(|&&j| block_of(j) == Some(block)).map(|&j| r_of(j).abs()).collect();
        if vals.is_empty() {
            continue;
        }
        stationarity.push(BlockResidual {
            block,
            max: vals.iter().cloned().fold(0.0, f64::max),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
        });
    }

    let mut row_multipliers = vec![0.0; instance.rows.len()];
    let mut complementarity: f64 = 0.0;
    let mut sign_violation: f64 = 0.0;
    for (i, r) in instance.rows.iter().enumerate() {
        if let Some((m, sign)) = mult[i] {
            let mu = sol.x[m];
            row_multipliers[i] = sign * mu;
            if r.sense != Sense::Eq {
                complementarity = complementarity.max((mu * slack[i]).abs());
                sign_violation = sign_violation.max(-mu);
            }
        }
    }
    for &(_, m, gap) in &bound_mult {
        complementarity = complementarity.max((sol.x[m] * gap).abs());
        sign_violation = sign_violation.max(-sol.x[m]);
    }

    // Path cost: own gradient plus capacity prices of the rows the path loads.
    let mut path_costs = Vec::new();
    for (w, cols) in instance.p_vars.iter().enumerate() {
        let cost = |j: usize| {
            grad[j]
                + instance
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.family == ConstraintFamily::SegmentCapacity)
                    .filter_map(|(i, r)| r.coeffs.iter().find(|c| c.0 == j).map(|c| row_multipliers[i] * c.1))
                    .sum::<f64>()
        };
        let costs: Vec<f64> = cols.iter().map(|&j| cost(j)).collect();
        let cheapest = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        for (h, &j) in cols.iter().enumerate() {
            if z[j] > USED {
                path_costs.push(PathCostCheck { od: w, path: h, share: z[j], cost: costs[h], cheapest });
            }
        }
    }

    let m = &instance.model;
    let mut emergency_lines = Vec::new();
    let mut unserved_boardings = Vec::new();
    for (l, line) in m.lines.iter().enumerate() {
        let y = instance.y_vars[l];
        let floor = instance.vars[y].lower;
        if line.kind == LineKind::Emergency && z[y] > floor + 1e-9 {
            emergency_lines.push((line.id.clone(), r_of(y).abs()));
        }
        if line.kind != LineKind::Depot && z[y] <= floor + 1e-9 {
            let boarding: f64 = m
                .ods
                .iter()
                .enumerate()
                .flat_map(|(w, od)| od.paths.iter().enumerate().map(move |(h, p)| (w, h, p)))
                .filter(|(_, _, p)| p.boardings.contains(&l))
                .map(|(w, h, _)| z[instance.p_vars[w][h]])
                .sum();
            if boarding > USED {
                unserved_boardings.push(line.id.clone());
            }
        }
    }

    Ok(KktReport {
        estimated: true,
        stationarity,
        complementarity,
        sign_violation,
        row_multipliers,
        path_costs,
        emergency_lines,
        unserved_boardings,
    })
}
