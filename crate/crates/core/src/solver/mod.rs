//! Global solver for the allocation QCQP.

pub mod bnb;
pub mod incumbent;
pub mod local;
pub mod lp;
pub mod relaxation;

pub use bnb::{branch, relative_gap, solve, solve_from, BranchingRule, Solution, SolveStatus, SolverConfig, TracePoint};
pub use incumbent::DualEstimates;

#[cfg(test)]
mod tests;
