//! Closed loop: plan, run on the stochastic simulator, refit `phi` every few
//! days and re-plan, then compare planned and realized conversion shares.
//!
//! cargo run --release --example episode

use parity_planner::instances;
use parity_planner::sim::EpisodeConfig;
use parity_planner::{run_episode, GroundTruth, ObjectiveSpec, SimMode};

fn main() -> parity_planner::Result<()> {
    let truth_input = instances::synthetic_twelve(4, ObjectiveSpec::Step { gamma: 0.9 });
    let truth = GroundTruth::from_demographics(&truth_input.demographics)?;

    // Start from a biased guess of every conversion rate.
    let mut input = truth_input.clone();
    for (i, d) in input.demographics.iter_mut().enumerate() {
        d.phi *= if i % 2 == 0 { 1.3 } else { 0.75 };
    }

    let log = run_episode(&input, &truth, &EpisodeConfig::new(30, 5, SimMode::Stochastic, 7))?;
    for p in &log.periods {
        println!(
            "period {} (day {}): {} campaigns, {} satisfied planned",
            p.index,
            p.start_day,
            p.plan.campaigns.len(),
            p.plan.metrics.satisfied_count
        );
    }
    for (guess, d) in input.demographics.iter().zip(&truth_input.demographics) {
        println!(
            "phi[{}]: start {:.4}, final {:.4}, true {:.4}",
            d.id, guess.phi, log.final_phi[&d.id], d.phi
        );
    }
    println!(
        "{} satisfied throughout, largest planned/realized share gap {:.4}, underspend days {}",
        log.satisfied.len(),
        log.max_satisfied_share_error(),
        log.underspend_days
    );
    Ok(())
}
