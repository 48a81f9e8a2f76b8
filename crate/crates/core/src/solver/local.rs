//! Local refinement of feasible points with inverses eliminated.
//!
//! Trust-region sequential linear programming moves shares, fleets and
//! relocations jointly until the linearized improvement vanishes; Newton's
//! method on the active constraints then drives the point to stationarity.

use nalgebra::{DMatrix, DVector};

use crate::formulation::QcqpInstance;
use crate::solver::lp::{LinearProgram, LpError, Sense};

/// Objective with every `u` replaced by `1 / y`.
pub fn reduced_objective(instance: &QcqpInstance, v: &[f64]) -> f64 {
    instance.objective_value(&instance.with_exact_inverses(v))
}

/// Gradient of [`reduced_objective`]; zero in inverse coordinates.
pub fn reduced_gradient(instance: &QcqpInstance, v: &[f64]) -> Vec<f64> {
    let mut g = instance.objective.clone();
    for c in &instance.couplings {
        g[c.u] = 0.0;
    }
    let y_of = coupled_fleet(instance);
    for t in &instance.bilinear {
        let y = y_of[t.u];
        g[t.p] += t.coef / v[y];
        g[y] -= t.coef * v[t.p] / (v[y] * v[y]);
    }
    g
}

fn coupled_fleet(instance: &QcqpInstance) -> Vec<usize> {
    let mut y_of = vec![usize::MAX; instance.num_vars()];
    for c in &instance.couplings {
        y_of[c.u] = c.y;
    }
    y_of
}

fn hessian(instance: &QcqpInstance, v: &[f64]) -> DMatrix<f64> {
    let n = instance.num_vars();
    let y_of = coupled_fleet(instance);
    let mut h = DMatrix::zeros(n, n);
    for t in &instance.bilinear {
        let y = y_of[t.u];
        let (p, yv) = (t.p, v[y]);
        h[(p, y)] -= t.coef / (yv * yv);
        h[(y, p)] -= t.coef / (yv * yv);
        h[(y, y)] += 2.0 * t.coef * v[p] / (yv * yv * yv);
    }
    h
}

const SLP_ITERATIONS: usize = 100;

/// Trust-region SLP from a feasible `start`; returns an improved feasible point.
pub fn slp(instance: &QcqpInstance, start: &[f64]) -> Result<Vec<f64>, LpError> {
    let n = instance.num_vars();
    let mut z = instance.with_exact_inverses(start);
    let mut f = reduced_objective(instance, &z);
    let mut radius = 0.05;
    for _ in 0..SLP_ITERATIONS {
        let g = reduced_gradient(instance, &z);
        let mut lp = LinearProgram::new();
        for (j, var) in instance.vars.iter().enumerate() {
            if instance.is_inverse(j) {
                lp.add_var(0.0, 0.0, 0.0);
                continue;
            }
            let span = (var.upper - var.lower).min(z[j].abs().max(1.0));
            let lo = var.lower.max(z[j] - radius * span);
            let hi = var.upper.min(z[j] + radius * span);
            lp.add_var(g[j], lo.min(z[j]), hi.max(z[j]));
        }
        for r in &instance.rows {
            lp.add_constraint(r.coeffs.clone(), r.sense, r.rhs);
        }
        let sol = match lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible) => break,
            Err(e) => return Err(e),
        };
        let mut cand = sol.x;
        cand.truncate(n);
        let cand = instance.with_exact_inverses(&cand);
        let predicted: f64 = (0..n).map(|j| g[j] * (z[j] - cand[j])).sum();
        if predicted <= 1e-13 * f.abs().max(1.0) {
            break;
        }
        let f_new = reduced_objective(instance, &cand);
        let ratio = (f - f_new) / predicted;
        if ratio > 0.1 && instance.max_violation(&cand) <= 1e-9 {
            z = cand;
            f = f_new;
            if ratio > 0.75 {
                radius = (radius * 2.0).min(1.0);
            }
        } else {
            radius *= 0.25;
            if radius < 1e-10 {
                break;
            }
        }
    }
    Ok(z)
}

const NEWTON_ITERATIONS: usize = 30;
const ACTIVE_TOL: f64 = 1e-9;

/// Newton's method on the stationarity system of the constraints active at
/// `start`. Returns `None` when the iteration leaves the feasible set or
/// worsens the objective.
pub fn newton_polish(instance: &QcqpInstance, start: &[f64]) -> Option<Vec<f64>> {
    let n = instance.num_vars();
    let mut z = instance.with_exact_inverses(start);
    let f0 = reduced_objective(instance, &z);
    let free: Vec<usize> = (0..n)
        .filter(|&j| {
            let v = &instance.vars[j];
            !instance.is_inverse(j)
                && z[j] > v.lower + ACTIVE_TOL * v.lower.abs().max(1.0)
                && z[j] < v.upper - ACTIVE_TOL * v.upper.abs().max(1.0)
        })
        .collect();
    if free.is_empty() {
        return Some(z);
    }
    let active: Vec<usize> = instance
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.sense == Sense::Eq || (r.activity(&z) - r.rhs).abs() <= ACTIVE_TOL * r.rhs.abs().max(1.0))
        .map(|(i, _)| i)
        .collect();
    let (nf, na) = (free.len(), active.len());
    let mut a = DMatrix::zeros(na, nf);
    let mut col_of = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        col_of[j] = k;
    }
    for (i, &r) in active.iter().enumerate() {
        for &(j, coef) in &instance.rows[r].coeffs {
            if col_of[j] != usize::MAX {
                a[(i, col_of[j])] += coef;
            }
        }
    }
    let grad_free = |z: &[f64]| {
        let g = reduced_gradient(instance, z);
        DVector::from_iterator(nf, free.iter().map(|&j| g[j]))
    };
    // Least-squares multipliers for the starting gradient.
    let g = grad_free(&z);
    let mut lambda = a.transpose().svd(true, true).solve(&(-&g), 1e-12).ok()?;
    for _ in 0..NEWTON_ITERATIONS {
        let g = grad_free(&z);
        let h_full = hessian(instance, &z);
        let r_stat = &g + a.transpose() * &lambda;
        let r_feas = DVector::from_iterator(na, active.iter().map(|&r| instance.rows[r].activity(&z) - instance.rows[r].rhs));
        let norm = r_stat.amax().max(r_feas.amax());
        if norm <= 1e-12 * f0.abs().max(1.0) {
            break;
        }
        let mut k = DMatrix::zeros(nf + na, nf + na);
        for (p, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                k[(p, q)] = h_full[(i, j)];
            }
        }
        k.view_mut((0, nf), (nf, na)).copy_from(&a.transpose());
        k.view_mut((nf, 0), (na, nf)).copy_from(&a);
        let mut rhs = DVector::zeros(nf + na);
        rhs.rows_mut(0, nf).copy_from(&(-r_stat));
        rhs.rows_mut(nf, na).copy_from(&(-r_feas));
        let step = k.svd(true, true).solve(&rhs, 1e-13).ok()?;
        for (p, &j) in free.iter().enumerate() {
            z[j] += step[p];
        }
        lambda += step.rows(nf, na);
        z = instance.with_exact_inverses(&z);
        if free.iter().any(|&j| z[j] <= 0.0 && instance.y_vars.contains(&j)) {
            return None;
        }
    }
    let f1 = reduced_objective(instance, &z);
    let ok = instance.max_violation(&z) <= 1e-9 && f1 <= f0 + 1e-12 * f0.abs().max(1.0);
    ok.then_some(z)
}
