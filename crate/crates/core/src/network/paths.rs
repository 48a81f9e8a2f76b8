//! Ranked loopless path enumeration.
//!
//! Best-first search over partial paths. The priority is the ranking cost of
//! the prefix plus a run-time lower bound to the destination, so complete
//! paths come off the heap in nondecreasing cost. Equal costs fall back to the
//! lexicographic order of segment ids, which a prefix never violates.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::{OdPair, Path, TransitNetwork};

const COST_SCALE: f64 = 1e6;
const MAX_EXPANSIONS: usize = 2_000_000;

/// Ranking cost: run time plus the transfer penalty for each boarding after the first.
pub fn path_rank_cost(net: &TransitNetwork, path: &Path) -> f64 {
    path.run_time + net.transfer_penalty * path.boardings.len().saturating_sub(1) as f64
}

fn cost_key(cost: f64) -> i64 {
    (cost * COST_SCALE).round() as i64
}

struct Partial {
    key: i64,
    ranks: Vec<u32>,
    segments: Vec<usize>,
    cost: f64,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    // Reversed so the max-heap pops the cheapest, then lexicographically smallest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key).then_with(|| other.ranks.cmp(&self.ranks))
    }
}

/// Lower bound on the remaining run time from each stop to `dest`.
fn run_time_to(net: &TransitNetwork, dest: &str, allow: &impl Fn(usize) -> bool) -> HashMap<String, f64> {
    let mut dist: HashMap<String, f64> = HashMap::new();
    dist.insert(dest.to_string(), 0.0);
    // Bellman-Ford style relaxation; networks here are small.
    loop {
        let mut changed = false;
        for (i, s) in net.segments.iter().enumerate() {
            if !allow(i) {
                continue;
            }
            if let Some(&d) = dist.get(&s.to) {
                let cand = d + s.run_time;
                let entry = dist.entry(s.from.clone()).or_insert(f64::INFINITY);
                if cand < *entry - 1e-12 {
                    *entry = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Up to `k` loopless paths from `od.origin` to `od.destination`, cheapest first.
///
/// A transfer from line A to line B at a stop is skipped when A also serves
/// the next hop: staying aboard is the same trip with one boarding less.
/// Transfers therefore happen at the last stop the two lines share.
pub fn enumerate_paths(net: &TransitNetwork, od: &OdPair, k: usize) -> Vec<Path> {
    enumerate_paths_where(net, od, k, |_| true)
}

/// As [`enumerate_paths`], restricted to segments accepted by `allow`.
pub fn enumerate_paths_where(
    net: &TransitNetwork,
    od: &OdPair,
    k: usize,
    allow: impl Fn(usize) -> bool,
) -> Vec<Path> {
    if k == 0 || od.origin == od.destination {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..net.segments.len()).collect();
    order.sort_by(|&a, &b| net.segments[a].id.cmp(&net.segments[b].id));
    let mut rank = vec![0u32; net.segments.len()];
    for (r, &s) in order.iter().enumerate() {
        rank[s] = r as u32;
    }
    let mut outgoing: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut served: HashSet<(usize, &str, &str)> = HashSet::new();
    for (i, s) in net.segments.iter().enumerate() {
        if allow(i) {
            outgoing.entry(s.from.as_str()).or_default().push(i);
            served.insert((s.line, s.from.as_str(), s.to.as_str()));
        }
    }
    let h = run_time_to(net, &od.destination, &allow);
    let Some(&h0) = h.get(&od.origin) else {
        return Vec::new();
    };

    let mut heap = BinaryHeap::new();
    heap.push(Partial { key: cost_key(h0), ranks: Vec::new(), segments: Vec::new(), cost: 0.0 });
    let mut found = Vec::new();
    let mut expansions = 0;
    while let Some(partial) = heap.pop() {
        let at = match partial.segments.last() {
            Some(&s) => net.segments[s].to.as_str(),
            None => od.origin.as_str(),
        };
        if at == od.destination {
            found.push(finish(net, partial.segments));
            if found.len() == k {
                break;
            }
            continue;
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            log::warn!("path enumeration for {od} stopped after {MAX_EXPANSIONS} expansions");
            break;
        }
        let Some(out) = outgoing.get(at) else { continue };
        for &s in out {
            let seg = &net.segments[s];
            let Some(&rest) = h.get(&seg.to) else { continue };
            let revisits = seg.to == od.origin || partial.segments.iter().any(|&p| net.segments[p].to == seg.to);
            if revisits {
                continue;
            }
            let transfer = match partial.segments.last() {
                Some(&p) if net.segments[p].line != seg.line => {
                    let prev = &net.segments[p];
                    if served.contains(&(prev.line, seg.from.as_str(), seg.to.as_str())) {
                        continue;
                    }
                    net.transfer_penalty
                }
                _ => 0.0,
            };
            let cost = partial.cost + seg.run_time + transfer;
            let mut segments = partial.segments.clone();
            segments.push(s);
            let mut ranks = partial.ranks.clone();
            ranks.push(rank[s]);
            heap.push(Partial { key: cost_key(cost + rest), ranks, segments, cost });
        }
    }
    found
}

fn finish(net: &TransitNetwork, segments: Vec<usize>) -> Path {
    let mut boardings = Vec::new();
    let mut prev_line = None;
    for &s in &segments {
        let line = net.segments[s].line;
        if prev_line != Some(line) {
            boardings.push(s);
        }
        prev_line = Some(line);
    }
    let run_time = segments.iter().map(|&s| net.segments[s].run_time).sum();
    Path { id: String::new(), od: 0, segments, boardings, run_time }
}
