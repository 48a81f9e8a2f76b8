//! Solves the fixed-duration model of the bundled deterministic scenario for each family.

use std::time::Duration;

use transit_mitigation::formulation::{build_bm, restrict, StrategyFamily};
use transit_mitigation::reference;
use transit_mitigation::solver::{solve, SolverConfig};

fn main() -> transit_mitigation::Result<()> {
    let secs: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let scenario = reference::deterministic();
    let nets = scenario.networks()?;
    let t = scenario.planning_duration()?;
    let base = build_bm(&nets.disrupted, &scenario, t)?;
    let config = SolverConfig::default().with_time_limit(Duration::from_secs(secs));
    for family in StrategyFamily::ALL {
        let inst = restrict(&base, family);
        let sol = solve(&inst, &config)?;
        println!(
            "{:>3}: {:>9} obj {:.3} lb {:.3} gap {:.2e} nodes {} in {:.1}s (user ${:.1}, operator ${:.1})",
            family.name(),
            sol.status.name(),
            sol.objective,
            sol.lower_bound,
            sol.gap,
            sol.nodes,
            sol.wall_time.as_secs_f64(),
            inst.beta * inst.user_minutes(&sol.values),
            inst.operator_dollars(&sol.values),
        );
        for (l, y) in sol.fleets(&inst).iter().enumerate() {
            print!("{}={:.2} ", inst.model.lines[l].id, y);
        }
        println!();
    }
    Ok(())
}
