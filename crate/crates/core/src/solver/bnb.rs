//! Spatial branch-and-bound over the inverse-fleet variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::QcqpInstance;

use super::incumbent::{self, Candidate, DualEstimates};
use super::relaxation::{self, Group, NodeBox, Relaxed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchingRule {
    /// Split the inverse whose grouped terms carry the largest relaxation error.
    MostViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fleet at or below which a line counts as not operated.
    pub epsilon: f64,
    pub gap_tolerance: f64,
    pub time_limit: Duration,
    pub max_nodes: usize,
    pub branching: BranchingRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            gap_tolerance: 1e-4,
            time_limit: Duration::from_secs(300),
            max_nodes: 1_000_000,
            branching: BranchingRule::MostViolated,
        }
    }
}

impl SolverConfig {
    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.time_limit.is_zero() {
            return Err(Error::InvalidParameter("time limit must be positive".into()));
        }
        if !(self.gap_tolerance >= 0.0) {
            return Err(Error::InvalidParameter("gap tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::TimeLimit => "time_limit",
            Self::Infeasible => "infeasible",
        }
    }
}

/// One bound update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub elapsed: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Every instance variable, inverses equal to `1 / y`; empty when infeasible.
    pub values: Vec<f64>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub wall_time: Duration,
    pub duals: Option<DualEstimates>,
    pub trace: Vec<TracePoint>,
}

impl Solution {
    pub fn is_feasible(&self) -> bool {
        !self.values.is_empty()
    }

    /// Path shares per OD.
    pub fn shares(&self, instance: &QcqpInstance) -> Vec<Vec<f64>> {
        instance.p_vars.iter().map(|cols| cols.iter().map(|&j| self.values[j]).collect()).collect()
    }

    pub fn fleets(&self, instance: &QcqpInstance) -> Vec<f64> {
        instance.y_vars.iter().map(|&j| self.values[j]).collect()
    }

    pub fn relocations(&self, instance: &QcqpInstance) -> Vec<f64> {
        instance.x_vars.iter().map(|&j| self.values[j]).collect()
    }

    /// Writes the trace as `elapsed_s,LB,UB,gap,nodes` rows.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["elapsed_s", "LB", "UB", "gap", "nodes"])?;
        for t in &self.trace {
            w.write_record([
                format!("{:.6}", t.elapsed),
                format!("{}", t.lower_bound),
                format!("{}", t.upper_bound),
                format!("{}", t.gap),
                t.nodes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Relative gap `(UB - LB) / UB`; zero when the bounds meet.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() {
        return f64::INFINITY;
    }
    let diff = (ub - lb).max(0.0);
    if diff == 0.0 {
        0.0
    } else if ub > 0.0 {
        diff / ub
    } else {
        diff / ub.abs().max(1e-12)
    }
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    domain: NodeBox,
    relaxed: Relaxed,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: smallest bound first, then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Splits the box of inverse `u` at `at`, clamped into the middle 80%.
///
/// Both children get their fleet range tightened by reciprocal propagation.
pub fn branch(instance: &QcqpInstance, parent: &NodeBox, u: usize, at: f64) -> (NodeBox, NodeBox) {
    let (lo, hi) = (parent.lower[u], parent.upper[u]);
    let width = hi - lo;
    let split = at.clamp(lo + 0.1 * width, lo + 0.9 * width);
    let mut left = parent.clone();
    left.upper[u] = split;
    let mut right = parent.clone();
    right.lower[u] = split;
    left.propagate(instance);
    right.propagate(instance);
    (left, right)
}

struct Search<'a> {
    instance: &'a QcqpInstance,
    config: &'a SolverConfig,
    groups: Vec<Group>,
    start: Instant,
    incumbent: Option<Candidate>,
    trace: Vec<TracePoint>,
    nodes: usize,
    last_lb: f64,
}

impl Search<'_> {
    fn ub(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |c| c.objective)
    }

    fn offer(&mut self, cand: Candidate) -> bool {
        if cand.objective < self.ub() && self.instance.max_violation(&cand.values) <= 1e-7 {
            self.incumbent = Some(cand);
            true
        } else {
            false
        }
    }

    fn record(&mut self, lb: f64) {
        let ub = self.ub();
        let lb = lb.max(self.last_lb).min(ub);
        let changed = self.trace.last().is_none_or(|t| t.lower_bound != lb || t.upper_bound != ub);
        self.last_lb = lb;
        if changed {
            self.trace.push(TracePoint {
                elapsed: self.start.elapsed().as_secs_f64(),
                lower_bound: lb,
                upper_bound: ub,
                gap: relative_gap(lb, ub),
                nodes: self.nodes,
            });
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        let ub = self.ub();
        ub.is_finite() && relative_gap(bound, ub) <= self.config.gap_tolerance
    }

    fn timed_out(&self) -> bool {
        self.start.elapsed() >= self.config.time_limit || self.nodes >= self.config.max_nodes
    }
}

/// Global lower bound: the best open node, or what was pruned near the incumbent.
fn open_bound(heap: &BinaryHeap<Node>, pruned: f64, ub: f64) -> f64 {
    heap.peek().map_or(ub, |n| n.bound).min(pruned).min(ub)
}

/// Solves `instance` to the configured gap or limit.
pub fn solve(instance: &QcqpInstance, config: &SolverConfig) -> Result<Solution> {
    solve_from(instance, config, None)
}

/// As [`solve`], seeded with a known feasible point such as the optimum of a
/// more restricted family.
pub fn solve_from(instance: &QcqpInstance, config: &SolverConfig, start: Option<&[f64]>) -> Result<Solution> {
    config.validate()?;
    let lp_err = |e| Error::SolverFailure(format!("linear subproblem: {e}"));
    let mut search = Search {
        instance,
        config,
        groups: relaxation::groups(instance),
        start: Instant::now(),
        incumbent: None,
        trace: Vec::new(),
        nodes: 0,
        last_lb: f64::NEG_INFINITY,
    };
    if let Some(v) = start {
        if v.len() == instance.num_vars() {
            if let Some(c) = incumbent::inner_lp(instance, v).map_err(lp_err)? {
                search.offer(c);
            }
        }
    }

    let mut root = NodeBox::root(instance);
    let root_relaxed = if root.propagate(instance) {
        relaxation::relax(instance, &search.groups, &root).map_err(lp_err)?
    } else {
        None
    };
    let Some(root_relaxed) = root_relaxed else {
        return Ok(Solution {
            values: Vec::new(),
            objective: f64::INFINITY,
            lower_bound: f64::INFINITY,
            gap: f64::INFINITY,
            status: SolveStatus::Infeasible,
            nodes: 1,
            wall_time: search.start.elapsed(),
            duals: None,
            trace: Vec::new(),
        });
    };
    search.nodes = 1;
    if let Some(c) = incumbent::from_relaxed(instance, &root_relaxed.point, f64::INFINITY).map_err(lp_err)? {
        search.offer(c);
    }
    search.record(root_relaxed.value);

    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    heap.push(Node { id: 0, depth: 0, bound: root_relaxed.value, domain: root, relaxed: root_relaxed });
    // Smallest bound among nodes discarded as within tolerance of the incumbent.
    let mut pruned = f64::INFINITY;
    let mut timed_out = false;
    while let Some(node) = heap.pop() {
        if search.prunable(node.bound) {
            // Best-first: every remaining node is at least as good a candidate for pruning.
            pruned = pruned.min(node.bound);
            heap.clear();
            break;
        }
        if search.timed_out() {
            heap.push(node);
            timed_out = true;
            break;
        }
        let errors = node.relaxed.errors(&search.groups, instance);
        let (k, worst) = errors
            .iter()
            .enumerate()
            .fold((usize::MAX, 0.0), |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc });
        let tol = 1e-9 * node.bound.abs().max(1.0);
        if k == usize::MAX || worst <= tol {
            // The relaxed point is feasible once inverses are made exact.
            let values = instance.with_exact_inverses(&node.relaxed.point);
            if let Some(c) = incumbent::inner_lp(instance, &values).map_err(lp_err)? {
                search.offer(c);
            }
            pruned = pruned.min(node.bound);
            let lb = open_bound(&heap, pruned, search.ub());
            search.record(lb);
            continue;
        }
        let coupling = instance.couplings[k];
        let (left, right) = branch(instance, &node.domain, coupling.u, node.relaxed.point[coupling.u]);
        for child in [left, right] {
            search.nodes += 1;
            if child.lower.iter().zip(&child.upper).any(|(lo, hi)| lo > hi) {
                continue;
            }
            let Some(relaxed) = relaxation::relax(instance, &search.groups, &child).map_err(lp_err)? else {
                continue;
            };
            let bound = relaxed.value.max(node.bound);
            if search.prunable(bound) {
                pruned = pruned.min(bound);
                continue;
            }
            let polish_below = search.ub() * (1.0 - 1e-6);
            if let Some(c) = incumbent::from_relaxed(instance, &relaxed.point, polish_below).map_err(lp_err)? {
                search.offer(c);
            }
            heap.push(Node { id: next_id, depth: node.depth + 1, bound, domain: child, relaxed });
            next_id += 1;
        }
        let lb = open_bound(&heap, pruned, search.ub());
        search.record(lb);
    }

    let lb = open_bound(&heap, pruned, search.ub());
    search.record(lb);
    let lb = search.last_lb;
    let wall_time = search.start.elapsed();
    let nodes = search.nodes;
    let trace = std::mem::take(&mut search.trace);
    let Some(best) = search.incumbent else {
        let status = if timed_out { SolveStatus::TimeLimit } else { SolveStatus::Infeasible };
        return Ok(Solution {
            values: Vec::new(),
            objective: f64::INFINITY,
            lower_bound: lb,
            gap: f64::INFINITY,
            status,
            nodes,
            wall_time,
            duals: None,
            trace,
        });
    };
    let gap = relative_gap(lb, best.objective);
    let status = if gap <= config.gap_tolerance { SolveStatus::Optimal } else { SolveStatus::TimeLimit };
    Ok(Solution {
        values: best.values,
        objective: best.objective,
        lower_bound: lb,
        gap,
        status,
        nodes,
        wall_time,
        duals: Some(best.duals),
        trace,
    })
}
