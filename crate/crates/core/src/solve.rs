//! Objective dispatch: one entry point from a validated input to a plan with
//! dollar budgets.

use crate::error::Result;
use crate::model::{transform, ObjectiveSpec, PlanInput, TransformedInput};
use crate::monotone::{solve_monotone, MonotoneFunction};
use crate::plan::{realize_budgets, Plan};
use crate::step::solve_step;
use crate::tvd::solve_tvd;

/// Solves an already transformed instance for `objective` with at most `k`
/// campaigns (`k + 1` for the distance objective).
pub fn solve_transformed(t: &TransformedInput, k: usize, objective: &ObjectiveSpec) -> Result<Plan> {
    objective.validate()?;
    match *objective {
        ObjectiveSpec::Step { gamma } => solve_step(t, k, gamma),
        ObjectiveSpec::MonotoneLinear { gamma } => {
            solve_monotone(t, k, &MonotoneFunction::linear_cap(gamma)?)
        }
        ObjectiveSpec::Tvd => solve_tvd(t, k),
    }
}

/// Validates `input`, solves its objective and splits the daily budget.
pub fn solve(input: &PlanInput) -> Result<Plan> {
    input.validate()?;
    let t = transform(input)?;
    let plan = solve_transformed(&t, input.k, &input.objective)?;
    realize_budgets(&plan, input)
}
