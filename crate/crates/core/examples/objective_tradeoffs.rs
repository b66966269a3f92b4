//! How the number of campaigns and the parity threshold trade off against
//! satisfied demographics, cost per conversion and audience size.
//!
//! cargo run --release --example objective_tradeoffs

use parity_planner::instances;
use parity_planner::{solve, ObjectiveSpec};

fn main() -> parity_planner::Result<()> {
    println!("{:>9} {:>2} {:>9} {:>10} {:>8}", "objective", "k", "satisfied", "cpv", "size");
    for k in 1..=4 {
        for gamma in [0.7, 0.8, 0.9, 1.0] {
            let plan = solve(&instances::synthetic_twelve(k, ObjectiveSpec::Step { gamma }))?;
            println!(
                "{:>9} {k:>2} {:>9} {:>10.4} {:>8.4}",
                format!("step {gamma}"),
                plan.metrics.satisfied_count,
                plan.metrics.cpv,
                plan.metrics.size_ratio
            );
        }
        let plan = solve(&instances::synthetic_twelve(k, ObjectiveSpec::Tvd))?;
        println!(
            "{:>9} {k:>2} {:>9} {:>10.4} {:>8.4}  tvd {:.4}",
            "tvd",
            plan.metrics.satisfied_count,
            plan.metrics.cpv,
            plan.metrics.size_ratio,
            plan.objective_value
        );
    }
    Ok(())
}
