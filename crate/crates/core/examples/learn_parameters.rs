//! Recovering `q` from revealed campaign scaling factors under a rotation
//! schedule, then `phi` from one day of observed conversions.
//!
//! cargo run --example learn_parameters

use std::collections::BTreeMap;

use parity_planner::instances;
use parity_planner::learning::svd_rank;
use parity_planner::sim::PacingConfig;
use parity_planner::{
    design_rotation_splits, infer_phi, infer_q, simulate_day, GroundTruth, ObjectiveSpec, SimMode,
};

fn main() -> parity_planner::Result<()> {
    let input = instances::synthetic_twelve(4, ObjectiveSpec::Tvd);
    let ids: Vec<String> = input.demographics.iter().map(|d| d.id.clone()).collect();
    let q: Vec<f64> = input.demographics.iter().map(|d| d.q).collect();

    let schedule = design_rotation_splits(ids.len(), 4)?.with_ids(ids.clone())?;
    println!(
        "{} demographics, {} days, design rank {}",
        schedule.n(),
        schedule.day_count(),
        svd_rank(&schedule.design_matrix())
    );
    for (d, day) in schedule.days.iter().enumerate() {
        println!("day {d}: {day:?}");
    }

    let revealed = schedule.reveal(&q);
    let estimate = infer_q(&schedule, &revealed)?;
    let q_err = estimate
        .q
        .iter()
        .zip(&q)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    println!("q recovered, largest relative error {q_err:.1e}, residual {:.1e}", estimate.residual_norm);

    let truth = GroundTruth::from_demographics(&input.demographics)?;
    let day = simulate_day(
        &schedule.campaigns(0, 400.0),
        &truth,
        SimMode::Expected,
        &PacingConfig::default(),
        0,
        0,
    )?;
    let phi = infer_phi(&day.records, &estimate.as_map(), None)?;
    let truth_phi: BTreeMap<&str, f64> = input.demographics.iter().map(|d| (d.id.as_str(), d.phi)).collect();
    for (id, p) in &phi {
        println!("phi[{id}] = {p:.6} (true {:.6})", truth_phi[id.as_str()]);
    }
    Ok(())
}
