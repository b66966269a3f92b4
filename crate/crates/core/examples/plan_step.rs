//! Exact step plan: maximize the number of demographics whose conversion
//! share reaches `gamma` times their population share.
//!
//! cargo run --example plan_step

use parity_planner::instances;
use parity_planner::{solve, ObjectiveSpec};

fn main() -> parity_planner::Result<()> {
    let input = instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 });
    let plan = solve(&input)?;

    println!("k = {}, budget = ${}", input.k, input.budget);
    for c in &plan.campaigns {
        println!(
            "{}: members {:?}, level {:.6}, ${:.2}/day",
            c.id, c.members, c.level, c.daily_budget
        );
    }
    println!("unassigned: {:?}", plan.unassigned);
    for (id, rho) in &plan.rho {
        println!("rho[{id}] = {rho:.6}");
    }
    println!(
        "satisfied {} of {}, cost per conversion ${:.4}",
        plan.metrics.satisfied_count,
        plan.rho.len(),
        plan.metrics.cpv
    );
    Ok(())
}
