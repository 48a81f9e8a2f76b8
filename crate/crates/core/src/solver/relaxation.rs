//! Linear relaxation of a QCQP instance over a box.
//!
//! Bilinear terms sharing an inverse-fleet variable and an OD are grouped:
//! `Σ coef p u = u s` with `s` the group's linear form. Each group gets an
//! epigraph variable bounded below by the two McCormick under-estimators of
//! `u s`. Couplings `u y = 1` are relaxed by the secant from above and by
//! tangent cuts from below, refined around the relaxed point for a few rounds.

use std::collections::BTreeMap;

use crate::formulation::{QcqpInstance, VarKind};
use crate::solver::lp::{LinearProgram, LpError, Sense};

/// Variable bounds of a branch-and-bound node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl NodeBox {
    pub fn root(instance: &QcqpInstance) -> Self {
        Self { lower: instance.lower(), upper: instance.upper() }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&x, (&lo, &hi))| x >= lo - tol && x <= hi + tol)
    }

    /// Tightens coupled pairs by reciprocal arithmetic. Returns `false` when
    /// the box becomes empty.
    pub fn propagate(&mut self, instance: &QcqpInstance) -> bool {
        for c in &instance.couplings {
            let (u, y) = (c.u, c.y);
            if self.upper[y] > 0.0 {
                self.lower[u] = self.lower[u].max(1.0 / self.upper[y]);
            }
            if self.lower[y] > 0.0 {
                self.upper[u] = self.upper[u].min(1.0 / self.lower[y]);
            }
            if self.upper[u] > 0.0 {
                self.lower[y] = self.lower[y].max(1.0 / self.upper[u]);
            }
            if self.lower[u] > 0.0 {
                self.upper[y] = self.upper[y].min(1.0 / self.lower[u]);
            }
            for j in [u, y] {
                if self.lower[j] > self.upper[j] {
                    if self.lower[j] - self.upper[j] > 1e-12 * self.upper[j].abs().max(1.0) {
                        return false;
                    }
                    self.lower[j] = self.upper[j];
                }
            }
        }
        true
    }
}

/// Terms `coef * p` multiplied by one inverse variable within one OD.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub u: usize,
    pub y: usize,
    pub terms: Vec<(usize, f64)>,
    /// Largest value of the linear form over a single path of the OD.
    pub path_max: f64,
}

impl Group {
    pub fn value(&self, v: &[f64]) -> f64 {
        self.terms.iter().map(|&(p, c)| c * v[p]).sum()
    }

    fn range(&self, b: &NodeBox) -> (f64, f64) {
        let lo: f64 = self.terms.iter().map(|&(p, c)| c * b.lower[p]).sum();
        let hi: f64 = self.terms.iter().map(|&(p, c)| c * b.upper[p]).sum();
        (lo, hi.min(self.path_max).max(lo))
    }
}

/// Groups the instance's bilinear terms by `(u, od)`.
pub fn groups(instance: &QcqpInstance) -> Vec<Group> {
    let y_of: BTreeMap<usize, usize> = instance.couplings.iter().map(|c| (c.u, c.y)).collect();
    // Key `None` keeps terms whose multiplier is not a path share apart.
    let mut map: BTreeMap<(usize, Option<usize>, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for t in &instance.bilinear {
        let key = match instance.vars[t.p].kind {
            VarKind::PathShare { od, .. } => (t.u, Some(od), 0),
            _ => (t.u, None, t.p),
        };
        *map.entry(key).or_default().entry(t.p).or_insert(0.0) += t.coef;
    }
    map.into_iter()
        .map(|((u, od, _), terms)| {
            // Shares of one OD sum to one, so the form never exceeds its largest coefficient.
            let path_max = match od {
                Some(_) => terms.values().cloned().fold(0.0, f64::max),
                None => f64::INFINITY,
            };
            Group { u, y: y_of[&u], terms: terms.into_iter().collect(), path_max }
        })
        .collect()
}

/// Optimal relaxed point of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed {
    /// Lower bound on the instance objective over the node.
    pub value: f64,
    /// Relaxed values of the instance variables.
    pub point: Vec<f64>,
    /// Epigraph values, one per group.
    pub epigraph: Vec<f64>,
}

impl Relaxed {
    /// Per-coupling shortfall of the relaxation: true bilinear cost with `u = 1/y`
    /// minus its epigraph estimate.
    pub fn errors(&self, groups: &[Group], instance: &QcqpInstance) -> Vec<f64> {
        let mut err = vec![0.0; instance.couplings.len()];
        for (g, w) in groups.iter().zip(&self.epigraph) {
            let k = instance.couplings.iter().position(|c| c.u == g.u).expect("grouped inverse is coupled");
            err[k] += g.value(&self.point) / self.point[g.y] - w;
        }
        err
    }
}

pub const TANGENT_ROUNDS: usize = 30;

/// The relaxation LP over `b` before any cut refinement, with the epigraph column of each group.
pub fn relaxation_lp(instance: &QcqpInstance, groups: &[Group], b: &NodeBox) -> (LinearProgram, Vec<usize>) {
    let n = instance.num_vars();
    let mut lp = LinearProgram::new();
    for j in 0..n {
        lp.add_var(instance.objective[j], b.lower[j], b.upper[j]);
    }
    for r in &instance.rows {
        lp.add_constraint(r.coeffs.clone(), r.sense, r.rhs);
    }
    let mut epi = Vec::with_capacity(groups.len());
    for g in groups {
        let w = lp.add_var(1.0, 0.0, f64::INFINITY);
        epi.push(w);
        let (s_lo, s_hi) = g.range(b);
        let (u_lo, u_hi) = (b.lower[g.u], b.upper[g.u]);
        // w >= s_lo u + u_lo s - s_lo u_lo
        let mut c1 = vec![(w, 1.0), (g.u, -s_lo)];
        c1.extend(g.terms.iter().map(|&(p, c)| (p, -u_lo * c)));
        lp.add_constraint(c1, Sense::Ge, -s_lo * u_lo);
        // w >= s_hi u + u_hi s - s_hi u_hi
        let mut c2 = vec![(w, 1.0), (g.u, -s_hi)];
        c2.extend(g.terms.iter().map(|&(p, c)| (p, -u_hi * c)));
        lp.add_constraint(c2, Sense::Ge, -s_hi * u_hi);
    }
    for c in &instance.couplings {
        let (y_lo, y_hi) = (b.lower[c.y], b.upper[c.y]);
        if y_lo <= 0.0 {
            continue;
        }
        if y_hi > y_lo {
            lp.add_constraint(vec![(c.u, 1.0), (c.y, 1.0 / (y_lo * y_hi))], Sense::Le, 1.0 / y_lo + 1.0 / y_hi);
        }
        for y0 in initial_cut_points(y_lo, y_hi) {
            add_tangent(&mut lp, c.u, c.y, y0);
        }
    }
    (lp, epi)
}

/// Solves the relaxation over `b`; `None` when the node is infeasible.
pub fn relax(instance: &QcqpInstance, groups: &[Group], b: &NodeBox) -> Result<Option<Relaxed>, LpError> {
    let n = instance.num_vars();
    let (mut lp, epi) = relaxation_lp(instance, groups, b);
    let mut sol = match lp.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut cut_points: Vec<Vec<f64>> = instance
        .couplings
        .iter()
        .map(|c| initial_cut_points(b.lower[c.y], b.upper[c.y]))
        .collect();
    for _ in 0..TANGENT_ROUNDS {
        let mut added = false;
        for (c, points) in instance.couplings.iter().zip(cut_points.iter_mut()) {
            let (u, y) = (sol.x[c.u], sol.x[c.y]);
            let fresh = points.iter().all(|&p| (p - y).abs() > 1e-7 * p);
            if y > 0.0 && fresh && 1.0 / y - u > 1e-9 * (1.0 / y) {
                add_tangent(&mut lp, c.u, c.y, y);
                points.push(y);
                added = true;
            }
        }
        if !added {
            break;
        }
        let before = sol.objective;
        sol = match lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible) => return Ok(None),
            Err(e) => return Err(e),
        };
        if sol.objective - before <= 1e-8 * before.abs().max(1.0) {
            break;
        }
    }
    let epigraph = epi.iter().map(|&w| sol.x[w]).collect();
    let mut point = sol.x;
    point.truncate(n);
    Ok(Some(Relaxed { value: instance.constant + sol.objective, point, epigraph }))
}

/// Geometrically spaced tangent points across the fleet range.
fn initial_cut_points(lo: f64, hi: f64) -> Vec<f64> {
    if lo <= 0.0 || hi <= lo {
        return vec![lo.max(hi)];
    }
    let ratio = (hi / lo).powf(0.25);
    (0..5).map(|k| lo * ratio.powi(k)).collect()
}

/// `u >= 2/y0 - y/y0^2`, the tangent of `1/y` at `y0`.
fn add_tangent(lp: &mut LinearProgram, u: usize, y: usize, y0: f64) {
    lp.add_constraint(vec![(u, 1.0), (y, 1.0 / (y0 * y0))], Sense::Ge, 2.0 / y0);
}
