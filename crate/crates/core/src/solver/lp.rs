//! Dense bounded-variable simplex.
//!
//! Two phases over a row-equilibrated tableau. Nonbasic columns sit at either
//! bound, so variable bounds never become rows. Pricing is Dantzig's rule with
//! a switch to Bland's rule after a run of degenerate pivots; the switch is
//! undone as soon as the objective moves again.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    /// Recompute basic values from a fresh factorization of the final basis.
    pub refine: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: 50_000,
            refine: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Sensitivity of the optimum to each constraint's right-hand side.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("variable {0} has lower bound above upper bound")]
    InvalidBounds(usize),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.solve_with(&SimplexOptions::default())
    }

    pub fn solve_with(&self, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
        let mut tableau = Tableau::build(self)?;
        tableau.solve(opts)?;
        Ok(tableau.extract(self, opts))
    }
}

/// How an original variable maps onto tableau columns: `x = offset + sign * col`,
/// or `x = col - neg` for free variables.
#[derive(Debug, Clone, Copy)]
struct ColMap {
    col: usize,
    sign: f64,
    offset: f64,
    neg: Option<usize>,
}

const REINVERT_EVERY: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Row-major `m x n` working tableau, `B^-1 A`.
    t: Vec<f64>,
    /// Pristine transformed matrix, kept for refinement.
    a0: Vec<f64>,
    b0: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    upper: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    first_artificial: usize,
    /// Column that formed the identity for each row in the starting basis.
    initial_basic: Vec<usize>,
    row_scale: Vec<f64>,
    row_sign: Vec<f64>,
    maps: Vec<ColMap>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let nv = lp.num_vars();
        let mut maps = Vec::with_capacity(nv);
        let mut upper = Vec::new();
        let mut cost = Vec::new();
        for j in 0..nv {
            let (lo, mut hi) = (lp.lower[j], lp.upper[j]);
            if hi < lo {
                if lo - hi > 1e-9 * (1.0 + lo.abs()) {
                    return Err(LpError::InvalidBounds(j));
                }
                hi = lo;
            }
            let c = lp.objective[j];
            if lo.is_finite() {
                maps.push(ColMap { col: upper.len(), sign: 1.0, offset: lo, neg: None });
                upper.push(if hi.is_finite() { hi - lo } else { f64::INFINITY });
                cost.push(c);
            } else if hi.is_finite() {
                maps.push(ColMap { col: upper.len(), sign: -1.0, offset: hi, neg: None });
                upper.push(f64::INFINITY);
                cost.push(-c);
            } else {
                let col = upper.len();
                maps.push(ColMap { col, sign: 1.0, offset: 0.0, neg: Some(col + 1) });
                upper.extend([f64::INFINITY, f64::INFINITY]);
                cost.extend([c, -c]);
            }
        }
        let n_struct = upper.len();
        let m = lp.constraints.len();

        let mut rows = vec![vec![0.0; n_struct]; m];
        let mut rhs = vec![0.0; m];
        for (i, con) in lp.constraints.iter().enumerate() {
            let mut b = con.rhs;
            for &(j, a) in &con.coeffs {
                let map = maps[j];
                b -= a * map.offset;
                rows[i][map.col] += a * map.sign;
                if let Some(neg) = map.neg {
                    rows[i][neg] -= a;
                }
            }
            rhs[i] = b;
        }

        let mut row_scale = vec![1.0; m];
        let mut row_sign = vec![1.0; m];
        let mut slack_coef = vec![0.0; m];
        for i in 0..m {
            let s = rows[i].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if s > 0.0 {
                row_scale[i] = s;
                rows[i].iter_mut().for_each(|v| *v /= s);
                rhs[i] /= s;
            }
            slack_coef[i] = match lp.constraints[i].sense {
                Sense::Le => 1.0,
                Sense::Ge => -1.0,
                Sense::Eq => 0.0,
            };
            if rhs[i] < 0.0 {
                row_sign[i] = -1.0;
                rows[i].iter_mut().for_each(|v| *v = -*v);
                rhs[i] = -rhs[i];
                slack_coef[i] = -slack_coef[i];
            }
        }

        let n_slack = slack_coef.iter().filter(|c| **c != 0.0).count();
        let n_art = slack_coef.iter().filter(|c| **c <= 0.0).count();
        let n = n_struct + n_slack + n_art;
        let first_artificial = n_struct + n_slack;

        let mut t = vec![0.0; m * n];
        let mut basis = vec![0; m];
        let mut initial_basic = vec![0; m];
        let mut next_slack = n_struct;
        let mut next_art = first_artificial;
        for i in 0..m {
            t[i * n..i * n + n_struct].copy_from_slice(&rows[i]);
            if slack_coef[i] != 0.0 {
                t[i * n + next_slack] = slack_coef[i];
                if slack_coef[i] > 0.0 {
                    basis[i] = next_slack;
                }
                next_slack += 1;
            }
            if slack_coef[i] <= 0.0 {
                t[i * n + next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            }
            initial_basic[i] = basis[i];
        }
        upper.resize(n, f64::INFINITY);
        cost.resize(n, 0.0);

        let mut status = vec![Status::AtLower; n];
        for &b in &basis {
            status[b] = Status::Basic;
        }

        Ok(Self {
            m,
            n,
            a0: t.clone(),
            t,
            b0: rhs.clone(),
            beta: rhs,
            basis,
            status,
            upper,
            d: vec![0.0; n],
            cost,
            first_artificial,
            initial_basic,
            row_scale,
            row_sign,
            maps,
            iterations: 0,
        })
    }

    fn solve(&mut self, opts: &SimplexOptions) -> Result<(), LpError> {
        if self.first_artificial < self.n {
            let phase1: Vec<f64> =
                (0..self.n).map(|j| if j >= self.first_artificial { 1.0 } else { 0.0 }).collect();
            self.price_all(&phase1);
            self.run(&phase1, opts)?;
            let scale = 1.0 + self.b0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let worst = (0..self.m)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.beta[i])
                .fold(0.0f64, f64::max);
            if worst > opts.feasibility_tol * scale * 10.0 {
                return Err(LpError::Infeasible);
            }
            for j in self.first_artificial..self.n {
                self.upper[j] = 0.0;
            }
            self.drive_out_artificials(opts);
        }
        let cost = self.cost.clone();
        self.price_all(&cost);
        self.run(&cost, opts)
    }

    fn price_all(&mut self, cost: &[f64]) {
        let n = self.n;
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * n..(i + 1) * n];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn run(&mut self, cost: &[f64], opts: &SimplexOptions) -> Result<(), LpError> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut since_reinvert = 0usize;
        let mut final_checks = 0usize;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit);
            }
            let Some((q, dir)) = self.choose_entering(opts.optimality_tol, bland) else {
                // Confirm optimality with values recomputed from a fresh factorization.
                if since_reinvert == 0 || final_checks >= 3 || !self.refresh(cost) {
                    return Ok(());
                }
                if self.choose_entering(opts.optimality_tol, bland).is_none() {
                    return Ok(());
                }
                final_checks += 1;
                since_reinvert = 0;
                if !self.reinvert(cost) {
                    return Ok(());
                }
                continue;
            };
            self.iterations += 1;
            let step = self.ratio_test(q, dir, opts, bland);
            match step {
                None => return Err(LpError::Unbounded),
                Some((t, leave)) => {
                    if t <= opts.feasibility_tol {
                        degenerate_run += 1;
                        if degenerate_run > 40 {
                            bland = true;
                        }
                    } else {
                        degenerate_run = 0;
                        bland = false;
                    }
                    self.apply_step(q, dir, t, leave);
                }
            }
            since_reinvert += 1;
            if since_reinvert >= REINVERT_EVERY {
                if !self.reinvert(cost) {
                    self.price_all(cost);
                }
                since_reinvert = 0;
            }
        }
    }

    /// Recomputes basic values and reduced costs, leaving the tableau as is.
    fn refresh(&mut self, cost: &[f64]) -> bool {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            return false;
        }
        let bmat = DMatrix::from_fn(m, m, |i, k| self.a0[i * n + self.basis[k]]);
        let lu = bmat.clone().lu();
        let mut rhs = DVector::from_column_slice(&self.b0);
        for j in 0..n {
            if self.status[j] == Status::AtUpper && self.upper[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= self.a0[i * n + j] * self.upper[j];
                }
            }
        }
        let Some(beta) = lu.solve(&rhs) else { return false };
        let cb = DVector::from_iterator(m, self.basis.iter().map(|&b| cost[b]));
        let Some(y) = bmat.transpose().lu().solve(&cb) else { return false };
        if beta.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return false;
        }
        self.beta = beta.iter().copied().collect();
        for j in 0..n {
            let mut dj = cost[j];
            for i in 0..m {
                dj -= y[i] * self.a0[i * n + j];
            }
            self.d[j] = dj;
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
        true
    }

    /// Rebuilds the tableau, basic values and reduced costs from the original
    /// matrix and the current basis. Returns `false` if the basis is singular.
    fn reinvert(&mut self, cost: &[f64]) -> bool {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            self.price_all(cost);
            return true;
        }
        let bmat = DMatrix::from_fn(m, m, |i, k| self.a0[i * n + self.basis[k]]);
        let lu = bmat.lu();
        let a = DMatrix::from_row_slice(m, n, &self.a0);
        let Some(t) = lu.solve(&a) else { return false };
        let mut rhs = DVector::from_column_slice(&self.b0);
        for j in 0..n {
            if self.status[j] == Status::AtUpper && self.upper[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= self.a0[i * n + j] * self.upper[j];
                }
            }
        }
        let Some(beta) = lu.solve(&rhs) else { return false };
        if t.iter().any(|v| !v.is_finite()) || beta.iter().any(|v| !v.is_finite()) {
            return false;
        }
        for i in 0..m {
            for j in 0..n {
                self.t[i * n + j] = t[(i, j)];
            }
        }
        for (k, &b) in self.basis.iter().enumerate() {
            for i in 0..m {
                self.t[i * n + b] = if i == k { 1.0 } else { 0.0 };
            }
        }
        self.beta = beta.iter().copied().collect();
        self.price_all(cost);
        true
    }

    fn choose_entering(&self, tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n {
            let dir = match self.status[j] {
                Status::Basic => continue,
                Status::AtLower if self.upper[j] > 0.0 && self.d[j] < -tol => 1.0,
                Status::AtUpper if self.d[j] > tol => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = self.d[j].abs();
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    /// Two-pass ratio test. Returns the step length and, when a basic
    /// variable blocks, its row and whether it leaves at its upper bound.
    ///
    /// The first pass finds the largest step that keeps every basic variable
    /// within the feasibility tolerance; the second picks, among rows blocking
    /// within that step, the one with the largest pivot.
    fn ratio_test(&self, q: usize, dir: f64, opts: &SimplexOptions, bland: bool) -> Option<(f64, Option<(usize, bool)>)> {
        let n = self.n;
        let tol = opts.feasibility_tol;
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            let a = dir * self.t[i * n + q];
            if a.abs() <= opts.pivot_tol {
                continue;
            }
            let r = if a > 0.0 {
                (self.beta[i].max(0.0) + tol) / a
            } else {
                let ub = self.upper[self.basis[i]];
                if !ub.is_finite() {
                    continue;
                }
                ((ub - self.beta[i]).max(0.0) + tol) / -a
            };
            theta = theta.min(r);
        }
        if self.upper[q] <= theta {
            return if self.upper[q].is_finite() { Some((self.upper[q], None)) } else { None };
        }
        if !theta.is_finite() {
            return None;
        }
        let mut leave: Option<(usize, bool, f64)> = None;
        let mut best_alpha = 0.0;
        for i in 0..self.m {
            let a = dir * self.t[i * n + q];
            if a.abs() <= opts.pivot_tol {
                continue;
            }
            let (ratio, to_upper) = if a > 0.0 {
                (self.beta[i].max(0.0) / a, false)
            } else {
                let ub = self.upper[self.basis[i]];
                if !ub.is_finite() {
                    continue;
                }
                ((ub - self.beta[i]).max(0.0) / -a, true)
            };
            if ratio > theta {
                continue;
            }
            let better = match leave {
                None => true,
                Some((r, _, _)) if bland => self.basis[i] < self.basis[r],
                Some(_) => a.abs() > best_alpha,
            };
            if better {
                leave = Some((i, to_upper, ratio));
                best_alpha = a.abs();
            }
        }
        let (r, to_upper, ratio) = leave?;
        Some((ratio.max(0.0), Some((r, to_upper))))
    }

    fn apply_step(&mut self, q: usize, dir: f64, t: f64, leave: Option<(usize, bool)>) {
        let n = self.n;
        if t != 0.0 {
            for i in 0..self.m {
                let a = self.t[i * n + q];
                if a != 0.0 {
                    self.beta[i] -= t * dir * a;
                }
            }
        }
        match leave {
            None => {
                self.status[q] = if dir > 0.0 { Status::AtUpper } else { Status::AtLower };
            }
            Some((r, to_upper)) => {
                let entering_value = (if dir > 0.0 { 0.0 } else { self.upper[q] }) + dir * t;
                let old = self.basis[r];
                self.status[old] = if to_upper { Status::AtUpper } else { Status::AtLower };
                self.pivot(r, q);
                self.beta[r] = entering_value;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let piv = self.t[r * n + q];
        let inv = 1.0 / piv;
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            row.iter_mut().for_each(|v| *v *= inv);
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * n..(i + 1) * n];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[q] = 0.0;
        }
        self.basis[r] = q;
        self.status[q] = Status::Basic;
    }

    fn drive_out_artificials(&mut self, _opts: &SimplexOptions) {
        let n = self.n;
        for r in 0..self.m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let mut best: Option<usize> = None;
            let mut best_abs = 1e-9;
            for j in 0..self.first_artificial {
                if self.status[j] == Status::Basic {
                    continue;
                }
                let a = self.t[r * n + j].abs();
                if a > best_abs {
                    best_abs = a;
                    best = Some(j);
                }
            }
            if let Some(q) = best {
                let value = if self.status[q] == Status::AtUpper { self.upper[q] } else { 0.0 };
                let old = self.basis[r];
                self.status[old] = Status::AtLower;
                self.pivot(r, q);
                self.beta[r] = value;
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        for j in 0..self.n {
            v[j] = match self.status[j] {
                Status::AtUpper => self.upper[j],
                _ => 0.0,
            };
        }
        for (i, &b) in self.basis.iter().enumerate() {
            v[b] = self.beta[i];
        }
        v
    }

    fn refine_basic_values(&mut self) {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            return;
        }
        let mut rhs = self.b0.clone();
        for j in 0..n {
            if self.status[j] == Status::AtUpper && self.upper[j] != 0.0 {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.a0[i * n + j] * self.upper[j];
                }
            }
        }
        let bmat = DMatrix::from_fn(m, m, |i, k| self.a0[i * n + self.basis[k]]);
        if let Some(sol) = bmat.lu().solve(&DVector::from_vec(rhs)) {
            if sol.iter().all(|v| v.is_finite()) {
                for (i, v) in sol.iter().enumerate() {
                    if (v - self.beta[i]).abs() <= 1e-6 * (1.0 + self.beta[i].abs()) {
                        self.beta[i] = *v;
                    }
                }
            }
        }
    }

    fn extract(&mut self, lp: &LinearProgram, opts: &SimplexOptions) -> LpSolution {
        if opts.refine {
            self.refine_basic_values();
        }
        let cols = self.column_values();
        let x: Vec<f64> = self
            .maps
            .iter()
            .enumerate()
            .map(|(j, map)| {
                let mut c = cols[map.col].max(0.0);
                if self.upper[map.col].is_finite() {
                    c = c.min(self.upper[map.col]);
                }
                let mut v = map.offset + map.sign * c;
                if let Some(neg) = map.neg {
                    v -= cols[neg].max(0.0);
                }
                if lp.lower[j].is_finite() {
                    v = v.max(lp.lower[j]);
                }
                if lp.upper[j].is_finite() {
                    v = v.min(lp.upper[j]);
                }
                v
            })
            .collect();
        let duals: Vec<f64> = (0..self.m)
            .map(|i| {
                let k = self.initial_basic[i];
                let pi = self.cost[k] - self.d[k];
                self.row_sign[i] * pi / self.row_scale[i]
            })
            .collect();
        let reduced_costs = self.maps.iter().map(|map| map.sign * self.d[map.col]).collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution { x, objective, duals, reduced_costs, iterations: self.iterations }
    }
}
