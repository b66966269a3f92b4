//! The two restricted problems behind the monotone 2-approximation:
//! every member saturated, or every member below its own `beta`.
//!
//! cargo run --example monotone_cases

use parity_planner::instances;
use parity_planner::monotone::{evaluate, solve_monotone_cases, Case};
use parity_planner::{transform, MonotoneFunction, ObjectiveSpec};

fn main() -> parity_planner::Result<()> {
    let input = instances::synthetic_twelve(3, ObjectiveSpec::MonotoneLinear { gamma: 0.8 });
    let t = transform(&input)?;
    let f = MonotoneFunction::linear_cap(0.8)?;

    let outcome = solve_monotone_cases(&t, input.k, &f)?;
    for (name, case) in [("saturating", &outcome.case2), ("below-beta", &outcome.case3)] {
        println!(
            "{name:>10}: restricted {:.6}, before rescale f = {:.6}, after rescale f = {:.6}, {} campaigns",
            case.restricted_value,
            evaluate(&case.levels, &t, &f),
            case.plan.objective_value,
            case.plan.campaigns.len()
        );
    }
    let chosen = match outcome.chosen {
        Case::Saturating => "saturating",
        Case::BelowBeta => "below-beta",
    };
    println!("chosen: {chosen}");

    let plan = outcome.into_plan();
    for c in &plan.campaigns {
        println!("{}: {:?} at level {:.6}", c.id, c.members, c.level);
    }
    Ok(())
}
