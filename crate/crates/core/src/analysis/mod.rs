//! Closed-form allocation rules and optimality audits.

pub mod instances;
mod kkt;

pub use kkt::{kkt_residuals, Block, BlockResidual, KktReport, PathCostCheck};

use crate::error::{Error, Result};

/// Fleet split proportional to the square roots of the demands.
pub fn square_root_allocation(demand: &[f64], total_fleet: f64) -> Result<Vec<f64>> {
    if demand.iter().any(|&q| !(q >= 0.0)) || !(total_fleet > 0.0) {
        return Err(Error::InvalidParameter("need nonnegative demand and positive fleet".into()));
    }
    let roots: Vec<f64> = demand.iter().map(|q| q.sqrt()).collect();
    let sum: f64 = roots.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidParameter("all demands are zero".into()));
    }
    let mut y: Vec<f64> = roots.iter().map(|r| total_fleet * r / sum).collect();
    // Put the rounding remainder on the largest share.
    let (k, _) = y.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let rest: f64 = y.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, v)| v).sum();
    y[k] = total_fleet - rest;
    Ok(y)
}

/// Greedy fill of line caps in order of increasing travel time.
pub fn shortest_path_first(times: &[f64], caps: &[f64], total_fleet: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    let mut left = total_fleet.max(0.0);
    let mut y = vec![0.0; times.len()];
    for k in order {
        y[k] = caps[k].max(0.0).min(left);
        left -= y[k];
    }
    y
}
