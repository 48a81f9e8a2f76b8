//! Feasible points and their objective values.
//!
//! With fleets fixed every inverse is a constant and what remains in path
//! shares and relocations is a linear program. A relaxed point is turned into
//! a candidate by projecting its fleets onto the linear feasible set and
//! solving that inner program; promising candidates are then refined locally.

use crate::formulation::{ConstraintFamily, QcqpInstance};
use crate::solver::local;
use crate::solver::lp::{LinearProgram, LpError, LpSolution, Sense};

/// Multipliers of the inner program at a candidate; signs follow the
/// Lagrangian `f + Σ μ g` with `μ >= 0` on `<=` rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualEstimates {
    /// Per capacity row, indexed like `instance.rows`; zero for other rows.
    pub capacity: Vec<f64>,
    /// Per OD.
    pub path_choice: Vec<f64>,
    /// Per line.
    pub conservation: Vec<f64>,
}

/// A feasible point with `u = 1/y` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub values: Vec<f64>,
    pub objective: f64,
    pub duals: DualEstimates,
}

const FEAS_TOL: f64 = 1e-8;

/// Fleets in `[lower, upper]` and relocations satisfying the linear rows,
/// closest in L1 to `target` (indexed by instance variable).
pub fn project(instance: &QcqpInstance, target: &[f64]) -> Result<Option<Vec<f64>>, LpError> {
    let n = instance.num_vars();
    let mut lp = LinearProgram::new();
    for (j, v) in instance.vars.iter().enumerate() {
        let (lo, hi) = if instance.is_inverse(j) { (0.0, 0.0) } else { (v.lower, v.upper) };
        lp.add_var(0.0, lo, hi);
    }
    for r in &instance.rows {
        lp.add_constraint(r.coeffs.clone(), r.sense, r.rhs);
    }
    for &y in &instance.y_vars {
        let d = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(d, 1.0), (y, -1.0)], Sense::Ge, -target[y]);
        lp.add_constraint(vec![(d, 1.0), (y, 1.0)], Sense::Ge, target[y]);
    }
    match lp.solve() {
        Ok(sol) => Ok(Some(sol.x[..n].to_vec())),
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Best shares and relocations with fleets fixed to `values[y]`.
pub fn inner_lp(instance: &QcqpInstance, values: &[f64]) -> Result<Option<Candidate>, LpError> {
    let n = instance.num_vars();
    let mut fixed = vec![None; n];
    for &y in &instance.y_vars {
        fixed[y] = Some(values[y]);
    }
    for c in &instance.couplings {
        fixed[c.u] = Some(1.0 / values[c.y]);
    }
    let mut cost = instance.objective.clone();
    for t in &instance.bilinear {
        cost[t.p] += t.coef * fixed[t.u].expect("coupled inverse");
    }
    let mut lp = LinearProgram::new();
    let mut col = vec![usize::MAX; n];
    for j in 0..n {
        if fixed[j].is_none() {
            let v = &instance.vars[j];
            col[j] = lp.add_var(cost[j], v.lower, v.upper);
        }
    }
    let mut row_of = vec![None; instance.rows.len()];
    for (i, r) in instance.rows.iter().enumerate() {
        let mut coeffs = Vec::new();
        let mut rhs = r.rhs;
        for &(j, a) in &r.coeffs {
            match fixed[j] {
                Some(x) => rhs -= a * x,
                None => coeffs.push((col[j], a)),
            }
        }
        if coeffs.is_empty() {
            let ok = match r.sense {
                Sense::Le => rhs >= -FEAS_TOL,
                Sense::Ge => rhs <= FEAS_TOL,
                Sense::Eq => rhs.abs() <= FEAS_TOL * r.rhs.abs().max(1.0),
            };
            if !ok {
                return Ok(None);
            }
            continue;
        }
        row_of[i] = Some(lp.add_constraint(coeffs, r.sense, rhs));
    }
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut out = vec![0.0; n];
    for j in 0..n {
        out[j] = match fixed[j] {
            Some(x) => x,
            None => sol.x[col[j]],
        };
    }
    clean_shares(instance, &mut out);
    let duals = duals(instance, &row_of, &sol);
    Ok(Some(Candidate { objective: instance.objective_value(&out), values: out, duals }))
}

fn duals(instance: &QcqpInstance, row_of: &[Option<usize>], sol: &LpSolution) -> DualEstimates {
    let mut d = DualEstimates {
        capacity: vec![0.0; instance.rows.len()],
        path_choice: vec![0.0; instance.p_vars.len()],
        conservation: vec![0.0; instance.y_vars.len()],
    };
    for (i, r) in instance.rows.iter().enumerate() {
        let Some(k) = row_of[i] else { continue };
        // The solver reports ∂opt/∂rhs; the Lagrangian multiplier is its negative.
        let m = -sol.duals[k];
        match r.family {
            ConstraintFamily::SegmentCapacity => d.capacity[i] = m,
            ConstraintFamily::PathChoice => d.path_choice[r.owner] = m,
            ConstraintFamily::FleetConservation => d.conservation[r.owner] = m,
            ConstraintFamily::TotalFleet => {}
        }
    }
    d
}

/// Clips tiny negative shares and renormalizes each OD to sum to one.
fn clean_shares(instance: &QcqpInstance, v: &mut [f64]) {
    for cols in &instance.p_vars {
        let mut sum = 0.0;
        for &j in cols {
            v[j] = v[j].clamp(0.0, 1.0);
            sum += v[j];
        }
        if sum > 0.0 && (sum - 1.0).abs() < 1e-6 {
            for &j in cols {
                v[j] /= sum;
            }
        }
    }
}

/// Refines jointly with [`local::slp`] and [`local::newton_polish`], then
/// re-solves the inner program at the refined fleets.
pub fn polish(instance: &QcqpInstance, start: Candidate) -> Result<Candidate, LpError> {
    let mut best = start;
    let refined = local::slp(instance, &best.values)?;
    let refined = local::newton_polish(instance, &refined).unwrap_or(refined);
    if let Some(next) = inner_lp(instance, &refined)? {
        if next.objective <= best.objective {
            best = next;
        }
    }
    Ok(best)
}

/// Candidate derived from a relaxed point: projection, then the inner program.
/// Candidates below `polish_below` are also polished.
pub fn from_relaxed(instance: &QcqpInstance, point: &[f64], polish_below: f64) -> Result<Option<Candidate>, LpError> {
    let Some(projected) = project(instance, point)? else { return Ok(None) };
    let Some(cand) = inner_lp(instance, &projected)? else { return Ok(None) };
    if cand.objective < polish_below {
        polish(instance, cand).map(Some)
    } else {
        Ok(Some(cand))
    }
}
