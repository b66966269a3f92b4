//! Campaign specificity: classify each campaign/demographic cell as HIGH or
//! LOW, attach Clopper-Pearson intervals, and decide whether parity is
//! reachable at all.
//!
//! cargo run --example field_specificity

use std::collections::BTreeMap;

use parity_planner::analysis::{
    binomial_ci, classify, parity_feasibility, specificity, OutcomeLog, OutcomeRecord, FIELD_SPECIFICITY,
};

fn main() -> parity_planner::Result<()> {
    for m in FIELD_SPECIFICITY {
        println!(
            "{:<10} {:<9} alpha {:.2} beta {:.2} [{:.2}, {:.2}] -> {:?}",
            m.city,
            m.campaign,
            m.alpha,
            m.beta,
            m.ci.0,
            m.ci.1,
            classify(m.alpha, m.beta)
        );
    }

    let (lo, hi) = binomial_ci(21, 100, 0.95)?;
    println!("21 of 100 at 95%: [{lo:.4}, {hi:.4}]");

    let cell = |c: &str, d: &str, v: f64| OutcomeRecord {
        campaign_id: c.into(),
        demographic_id: d.into(),
        conversions: v,
        spend: 10.0 * v.max(1.0),
    };
    let log = OutcomeLog::new(vec![
        cell("broad", "x", 70.0),
        cell("broad", "y", 30.0),
        cell("targeted", "x", 45.0),
        cell("targeted", "y", 15.0),
    ])?;
    let alphas = BTreeMap::from([("x".to_string(), 0.4), ("y".to_string(), 0.6)]);
    let report = specificity(&log, &alphas, Some(0.95))?;
    for e in &report.entries {
        println!("{} / {}: beta {:.3} {:?} {:?}", e.campaign_id, e.demographic_id, e.beta, e.class, e.ci);
    }
    for (id, verdict) in parity_feasibility(&report, &alphas) {
        println!("{id}: {verdict:?}");
    }
    Ok(())
}
