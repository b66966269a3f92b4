//! Total-variation plan: weighted k-median on the sorted `beta` values with
//! a center pinned at zero, then every cluster moved to its weighted mean.
//!
//! cargo run --example tvd_recenter

use parity_planner::instances;
use parity_planner::tvd::solve_tvd_detailed;
use parity_planner::{transform, ObjectiveSpec};

fn main() -> parity_planner::Result<()> {
    let input = instances::synthetic_twelve(3, ObjectiveSpec::Tvd);
    let t = transform(&input)?;
    let solution = solve_tvd_detailed(&t, input.k);

    println!("relaxed k-median cost {:.6}", solution.median.cost);
    for c in &solution.clusters {
        let ids: Vec<&str> = c.range.clone().map(|p| t.entry(p).id.as_str()).collect();
        println!(
            "positions {:?} {:?}: median {:.6} -> level {:.6}, cost {:.6} -> {:.6}, balance {:.1e}",
            c.range, ids, c.relaxed_center, c.level, c.relaxed_cost, c.cost, c.balance_residual
        );
    }
    println!(
        "tvd {:.6}, expected conversions {:.12}",
        solution.plan.objective_value,
        solution.plan.conversions()
    );
    Ok(())
}
