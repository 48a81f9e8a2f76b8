//! Small hand-built instances with known optimal structure.

use crate::error::Result;
use crate::formulation::{AllocationModel, ModelArc, ModelLine, ModelOd, ModelPath, ModelSegment, QcqpInstance, StrategyFamily};
use crate::scenario::ArcClass;

fn free_arcs(n: usize) -> Vec<ModelArc> {
    let mut arcs = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from != to {
                arcs.push(ModelArc {
                    from,
                    to,
                    cost: 0.0,
                    diversion_time: 0.0,
                    class: ArcClass::LineTransfer,
                    family: StrategyFamily::Bm,
                });
            }
        }
    }
    arcs
}

/// One OD per line, each riding only its own line, fleet movable for free.
///
/// With round trip 2 and unit wait weight the objective is `Σ q_k / y_k`
/// plus one minute of riding per passenger.
pub fn independent_lines(demand: &[f64], total_fleet: f64) -> Result<QcqpInstance> {
    let n = demand.len();
    let base = total_fleet / n as f64;
    let lines = (0..n).map(|k| ModelLine::regular(&format!("line{}", k + 1), 2.0, base, total_fleet, 1.0)).collect();
    let segments = (0..n).map(|k| ModelSegment { id: format!("seg{}", k + 1), line: k, run_time: 1.0 }).collect();
    let ods = demand
        .iter()
        .enumerate()
        .map(|(k, &q)| ModelOd {
            label: format!("od{}", k + 1),
            weight: q,
            load: q,
            paths: vec![ModelPath { segments: vec![k], boardings: vec![k], run_time: 1.0 }],
        })
        .collect();
    AllocationModel {
        lines,
        segments,
        ods,
        arcs: free_arcs(n),
        gamma: 1.0,
        window: 0.0,
        operator_weight: 1.0,
        epsilon: 0.01,
        constant: 0.0,
    }
    .to_instance()
}

/// One OD served by parallel single-segment lines with run times `times`.
///
/// Each vehicle carries `throughput` passengers over the window and line `k`
/// holds at most `caps[k]` vehicles; the fleet starts evenly spread.
pub fn parallel_lines(times: &[f64], caps: &[f64], total_fleet: f64, demand: f64, throughput: f64) -> Result<QcqpInstance> {
    let n = times.len();
    let base = total_fleet / n as f64;
    let window = 60.0;
    let round_trip = 10.0;
    let capacity = throughput * round_trip / window;
    let lines = (0..n)
        .map(|k| ModelLine::regular(&format!("line{}", k + 1), round_trip, base.min(caps[k]), caps[k], capacity))
        .collect();
    let segments = (0..n).map(|k| ModelSegment { id: format!("seg{}", k + 1), line: k, run_time: times[k] }).collect();
    let paths = (0..n).map(|k| ModelPath { segments: vec![k], boardings: vec![k], run_time: times[k] }).collect();
    AllocationModel {
        lines,
        segments,
        ods: vec![ModelOd { label: "od".into(), weight: demand, load: demand, paths }],
        arcs: free_arcs(n),
        gamma: 1.0,
        window,
        operator_weight: 1.0,
        epsilon: 0.01,
        constant: 0.0,
    }
    .to_instance()
}
