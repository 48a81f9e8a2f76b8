//! The shipped reference scenarios.
//!
//! A 14-stop network with two metro and two bus lines, four emergency lines
//! and a small backup bus depot. Fleets, capacities and round-trip times are
//! fixed; the stop layout of lines L2 to L4 is a plausible choice, not a
//! surveyed one.

use crate::scenario::Scenario;

pub const DETERMINISTIC_JSON: &str = include_str!("../../../scenarios/reference_deterministic.json");
pub const STOCHASTIC_JSON: &str = include_str!("../../../scenarios/reference_stochastic.json");

/// Fixed 60-minute disruption, concave demand.
pub fn deterministic() -> Scenario {
    Scenario::from_json(DETERMINISTIC_JSON).expect("shipped scenario is valid")
}

/// 240-minute horizon with uniform duration and demand; grid cells vary both.
pub fn stochastic() -> Scenario {
    Scenario::from_json(STOCHASTIC_JSON).expect("shipped scenario is valid")
}
