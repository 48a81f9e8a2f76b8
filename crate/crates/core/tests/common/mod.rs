//! Random tiny allocation models and a brute-force oracle that shares no code
//! with the solver: relocations are enumerated on a grid, fleets follow from
//! conservation, and the share problem at fixed fleets is solved by
//! enumerating the vertices of its polytope.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transit_mitigation::formulation::{AllocationModel, ModelArc, ModelLine, ModelOd, ModelPath, ModelSegment, StrategyFamily};
use transit_mitigation::scenario::ArcClass;

pub const WINDOW: f64 = 60.0;

/// A model with at most 3 lines, 2 ODs, 3 paths per OD and 2 relocation
/// arcs whose status quo is feasible.
pub fn tiny_model(seed: u64) -> AllocationModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let m = draw(&mut rng);
        if evaluate(&m, &vec![0.0; m.arcs.len()]).is_some() {
            return m;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng) -> AllocationModel {
    let n_lines = rng.random_range(2..=3);
    let lines: Vec<ModelLine> = (0..n_lines)
        .map(|k| {
            let base = rng.random_range(1.0..4.0_f64);
            let max = base + rng.random_range(0.5..3.0);
            ModelLine::regular(&format!("L{k}"), rng.random_range(10.0..30.0), base, max, rng.random_range(30.0..120.0))
        })
        .collect();
    let segments: Vec<ModelSegment> = (0..n_lines)
        .map(|k| ModelSegment { id: format!("s{k}"), line: k, run_time: rng.random_range(2.0..15.0) })
        .collect();
    let mut routes: Vec<Vec<usize>> = (0..n_lines).map(|k| vec![k]).collect();
    for a in 0..n_lines {
        for b in a + 1..n_lines {
            routes.push(vec![a, b]);
        }
    }
    let n_ods = rng.random_range(1..=2);
    let ods = (0..n_ods)
        .map(|w| {
            let n_paths = rng.random_range(1..=3.min(routes.len()));
            let mut pool = routes.clone();
            let paths = (0..n_paths)
                .map(|_| {
                    let r = pool.swap_remove(rng.random_range(0..pool.len()));
                    let run_time = r.iter().map(|&s| segments[s].run_time).sum();
                    ModelPath { segments: r.clone(), boardings: r, run_time }
                })
                .collect();
            let q = rng.random_range(20.0..200.0);
            ModelOd { label: format!("od{w}"), weight: q, load: q, paths }
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> =
        (0..n_lines).flat_map(|a| (0..n_lines).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let n_arcs = rng.random_range(0..=2);
    let arcs = (0..n_arcs)
        .map(|_| {
            let (from, to) = pairs.swap_remove(rng.random_range(0..pairs.len()));
            let cost = if rng.random_bool(0.25) { 0.0 } else { rng.random_range(1.0..40.0) };
            ModelArc { from, to, cost, diversion_time: 0.0, class: ArcClass::LineTransfer, family: StrategyFamily::Bm }
        })
        .collect();
    AllocationModel {
        lines,
        segments,
        ods,
        arcs,
        gamma: 1.0,
        window: WINDOW,
        operator_weight: 1.0,
        epsilon: 0.01,
        constant: 0.0,
    }
}

/// Fleets implied by relocations `x`, or `None` outside the fleet bounds.
pub fn fleets(m: &AllocationModel, x: &[f64]) -> Option<Vec<f64>> {
    let mut y: Vec<f64> = m.lines.iter().map(|l| l.base_fleet).collect();
    for (a, &v) in m.arcs.iter().zip(x) {
        y[a.from] -= v;
        y[a.to] += v;
    }
    let ok = y.iter().zip(&m.lines).all(|(&v, l)| v >= m.epsilon - 1e-12 && v <= l.max_fleet + 1e-12);
    ok.then_some(y)
}

/// Optimal objective with relocations fixed to `x`.
pub fn evaluate(m: &AllocationModel, x: &[f64]) -> Option<f64> {
    let y = fleets(m, x)?;
    let operator: f64 = m.arcs.iter().zip(x).map(|(a, &v)| a.cost * v).sum();
    Some(user_cost(m, &y)? + m.operator_weight * operator + m.constant)
}

/// Best demand-weighted travel and wait time with fleets fixed to `y`.
pub fn user_cost(m: &AllocationModel, y: &[f64]) -> Option<f64> {
    let mut cost = Vec::new();
    let mut eq: Vec<Vec<f64>> = Vec::new();
    let n: usize = m.ods.iter().map(|od| od.paths.len()).sum();
    let mut offset = Vec::new();
    for od in &m.ods {
        let mut row = vec![0.0; n];
        offset.push(cost.len());
        for p in &od.paths {
            row[cost.len()] = 1.0;
            let wait: f64 = p.boardings.iter().map(|&l| m.gamma * m.lines[l].round_trip_time / (2.0 * y[l])).sum();
            cost.push(od.weight * (p.run_time + wait));
        }
        eq.push(row);
    }
    // Inequalities `a p <= b`: segment capacities, then nonnegativity.
    let mut le: Vec<(Vec<f64>, f64)> = Vec::new();
    for (s, seg) in m.segments.iter().enumerate() {
        let line = &m.lines[seg.line];
        let mut row = vec![0.0; n];
        for (w, od) in m.ods.iter().enumerate() {
            for (h, p) in od.paths.iter().enumerate() {
                if p.segments.contains(&s) {
                    row[offset[w] + h] = od.load * line.round_trip_time / (line.capacity * m.window);
                }
            }
        }
        if row.iter().any(|&a| a != 0.0) {
            le.push((row, y[seg.line]));
        }
    }
    for j in 0..n {
        let mut row = vec![0.0; n];
        row[j] = -1.0;
        le.push((row, 0.0));
    }
    let feasible = |p: &DVector<f64>| le.iter().all(|(a, b)| a.iter().zip(p.iter()).map(|(x, v)| x * v).sum::<f64>() <= b + 1e-9);
    let mut best: Option<f64> = None;
    for active in combinations(le.len(), n - eq.len()) {
        let rows: Vec<&Vec<f64>> = eq.iter().chain(active.iter().map(|&i| &le[i].0)).collect();
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let b = DVector::from_fn(n, |i, _| if i < eq.len() { 1.0 } else { le[active[i - eq.len()]].1 });
        let Some(p) = a.lu().solve(&b) else { continue };
        if p.iter().all(|v| v.is_finite()) && feasible(&p) {
            let v: f64 = cost.iter().zip(p.iter()).map(|(c, x)| c * x).sum();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else { return out };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleOptimum {
    pub objective: f64,
    pub x: Vec<f64>,
}

impl OracleOptimum {
    pub fn operator_cost(&self, m: &AllocationModel) -> f64 {
        m.arcs.iter().zip(&self.x).map(|(a, &v)| a.cost * v).sum()
    }
}

const GRID: usize = 40;

/// Grid search over relocations followed by a shrinking pattern search.
pub fn oracle(m: &AllocationModel) -> OracleOptimum {
    let n = m.arcs.len();
    let hi: Vec<f64> = m
        .arcs
        .iter()
        .map(|a| {
            let inflow: f64 = m.lines.iter().map(|l| l.base_fleet).sum();
            inflow.min(m.lines[a.to].max_fleet)
        })
        .collect();
    let mut best = OracleOptimum { objective: evaluate(m, &vec![0.0; n]).expect("feasible status quo"), x: vec![0.0; n] };
    let mut idx = vec![0usize; n];
    loop {
        let x: Vec<f64> = idx.iter().zip(&hi).map(|(&i, &h)| h * i as f64 / GRID as f64).collect();
        if let Some(v) = evaluate(m, &x) {
            if v < best.objective {
                best = OracleOptimum { objective: v, x };
            }
        }
        let Some(k) = idx.iter().position(|&i| i < GRID) else { break };
        idx[k] += 1;
        idx[..k].iter_mut().for_each(|i| *i = 0);
    }
    // Every direction in {-1, 0, 1}^n, so ridges between arcs are followed too.
    let dirs: Vec<Vec<f64>> = (0..3usize.pow(n as u32))
        .map(|c| (0..n).map(|k| (c / 3usize.pow(k as u32) % 3) as f64 - 1.0).collect::<Vec<f64>>())
        .filter(|d| d.iter().any(|&v| v != 0.0))
        .collect();
    let mut step = hi.iter().fold(0.0_f64, |a, &h| a.max(h)) / GRID as f64;
    while step > 1e-9 {
        let mut moved = false;
        for d in &dirs {
            let x: Vec<f64> = best.x.iter().zip(d).zip(&hi).map(|((&v, &s), &h)| (v + s * step).clamp(0.0, h)).collect();
            if let Some(v) = evaluate(m, &x) {
                if v < best.objective - 1e-12 {
                    best = OracleOptimum { objective: v, x };
                    moved = true;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    best
}
