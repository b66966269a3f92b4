//! Campaign partitioning and budget allocation for demographic parity in
//! advertising conversions under a proportional-spend platform model.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod instances;
pub mod io;
pub mod learning;
pub mod model;
pub mod monotone;
pub mod oracle;
pub mod plan;
pub mod sim;
pub mod solve;
pub mod step;
pub mod tvd;

pub use error::{PlannerError, Result};
pub use model::{
    conversion_rate, transform, transform_demographics, Demographic, ObjectiveSpec, PlanInput,
    TransformedEntry, TransformedInput,
};
pub use monotone::{solve_monotone, MonotoneFunction};
pub use plan::{
    predicted_shares, realize_budgets, rescale_to_one, Campaign, LevelGroup, LevelPlan, Plan,
    ReportMetrics,
};
pub use step::{knapsack_min_size, solve_step};
pub use tvd::{kmedian_line, recenter, solve_tvd};
pub use learning::{design_rotation_splits, infer_phi, infer_q, RotationSchedule};
pub use sim::{run_episode, simulate_day, GroundTruth, SimMode};
pub use solve::solve;
