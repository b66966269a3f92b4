//! Proportional pacing: expected spend and conversions, stochastic
//! replications around them, and stochastic underspend when the audience is
//! too small to absorb the budget.
//!
//! cargo run --release --example simulate_pacing

use parity_planner::sim::{replicate, summarize, CampaignSpec, PacingConfig, Unpaced};
use parity_planner::{simulate_day, GroundTruth, SimMode};

fn main() -> parity_planner::Result<()> {
    let truth = GroundTruth::new([("a", 1.0, 0.2), ("b", 4.0, 0.05)])?;
    let campaigns = vec![CampaignSpec::new("c1", vec!["a".into(), "b".into()], 100.0)];
    let pacing = PacingConfig::default();

    let expected = simulate_day(&campaigns, &truth, SimMode::Expected, &pacing, 1, 0)?;
    for r in &expected.records {
        println!("expected {}: spend {:.2}, conversions {:.3}", r.demographic_id, r.spend, r.conversions);
    }

    let runs = replicate(&campaigns, &truth, &pacing, 1, 500)?;
    for s in summarize(&runs) {
        println!(
            "500 runs {}: spend {:.2} +/- {:.2}, conversions {:.3} +/- {:.3}",
            s.demographic_id, s.mean_spend, s.se_spend, s.mean_conversions, s.se_conversions
        );
    }

    let thin = PacingConfig {
        unpaced: Unpaced::DollarsPerQ(10.0),
        ..pacing
    };
    let short = simulate_day(&campaigns, &truth, SimMode::Stochastic, &thin, 1, 0)?;
    for u in &short.underspend {
        println!(
            "{} underspends: budget ${:.2}, audience supports ${:.2}, spent ${:.2}",
            u.campaign_id,
            u.budget,
            u.unpaced,
            short.campaign_spend(&u.campaign_id)
        );
    }
    Ok(())
}
