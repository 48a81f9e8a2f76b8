//! Disruption response planning for transit networks: routing, fleet
//! reallocation and relocation timing, solved to a certified gap and
//! checked in a queue simulation. The guide lives in `book/`.

// NaN inputs must be rejected, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod formulation;
pub mod itm;
pub mod network;
pub mod reference;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/initiation.md")]
    mod initiation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
