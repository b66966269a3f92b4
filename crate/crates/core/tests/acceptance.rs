//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any hard check fails.

use std::collections::BTreeMap;
use std::time::Instant;

use parity_planner::analysis::{classify, specificity, OutcomeLog, OutcomeRecord, Specificity, FIELD_SPECIFICITY};
use parity_planner::instances::{self, random_instance, RandomSpec};
use parity_planner::learning::{design_rotation_splits, infer_phi, infer_q, RotationSchedule};
use parity_planner::model::{transform, Demographic, ObjectiveSpec, PlanInput};
use parity_planner::monotone::{solve_monotone, MonotoneFunction};
use parity_planner::oracle::{oracle_monotone, oracle_step, oracle_tvd};
use parity_planner::sim::{
    replicate, run_episode, simulate_day, summarize, CampaignSpec, EpisodeConfig, GroundTruth,
    PacingConfig, SimMode, SpendRecord,
};
use parity_planner::step::solve_step;
use parity_planner::tvd::solve_tvd_detailed;
use parity_planner::{realize_budgets, solve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const GAMMAS: [f64; 3] = [0.5, 0.7, 1.0];

fn random_case(seed: u64, n_range: (usize, usize), k_max: usize) -> (PlanInput, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(n_range.0..=n_range.1);
    let k = rng.random_range(1..=k_max).min(n);
    let gamma = GAMMAS[rng.random_range(0..GAMMAS.len())];
    let input = random_instance(&mut rng, n, k, ObjectiveSpec::Step { gamma }, &RandomSpec::default());
    (input, gamma)
}

fn step_exactness() -> Outcome {
    let instances = 240;
    let mut mismatches = Vec::new();
    for seed in 0..instances {
        let (input, gamma) = random_case(10_000 + seed, (2, 8), 3);
        let t = transform(&input).unwrap();
        let got = solve_step(&t, input.k, gamma).unwrap().objective_value;
        let opt = oracle_step(&t, input.k, gamma).unwrap().value;
        if got != opt {
            mismatches.push(format!("seed {seed}: {got} vs {opt}"));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{instances} instances, {} mismatches {:?}", mismatches.len(), mismatches),
    )
}

fn monotone_ratio() -> Outcome {
    let instances = 120;
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for seed in 0..instances {
        let (input, gamma) = random_case(20_000 + seed, (2, 7), 3);
        let t = transform(&input).unwrap();
        let f = MonotoneFunction::linear_cap(gamma).unwrap();
        let value = solve_monotone(&t, input.k, &f).unwrap().objective_value;
        let opt = oracle_monotone(&t, input.k, &f).unwrap().value;
        let ratio = value / opt;
        worst = worst.min(ratio);
        if !(0.5 - 1e-6..=1.0 + 1e-6).contains(&ratio) {
            failures.push(format!("seed {seed}: {value} / {opt}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{instances} instances, worst ratio {worst:.4}, failures {failures:?}"),
    )
}

fn tvd_instances() -> impl Iterator<Item = PlanInput> {
    (0..120).map(|seed| random_case(30_000 + seed, (2, 6), 2).0.with_objective(ObjectiveSpec::Tvd))
}

fn tvd_guarantee() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (i, input) in tvd_instances().enumerate() {
        count += 1;
        let t = transform(&input).unwrap();
        let s = solve_tvd_detailed(&t, input.k);
        let opt = oracle_tvd(&t, input.k).unwrap().value;
        let tvd = s.plan.tvd(&t);
        if opt > 1e-12 {
            worst = worst.max(tvd / opt);
        }
        let campaigns_ok = s.plan.campaigns.len() <= input.k + 1;
        let conv_ok = (s.plan.conversions() - 1.0).abs() <= 1e-9;
        let bound_ok = tvd <= 2.0 * opt + 1e-9;
        if !(campaigns_ok && conv_ok && bound_ok) {
            failures.push(format!(
                "#{i}: campaigns {} conversions {} tvd {tvd} opt {opt}",
                s.plan.campaigns.len(),
                s.plan.conversions()
            ));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{count} instances, worst tvd/opt {worst:.4}, failures {failures:?}"),
    )
}

fn recentering_balance() -> Outcome {
    let mut runs = 0;
    let mut clusters = 0;
    let mut worst_residual = 0.0_f64;
    let mut failures = Vec::new();
    let extra = (0..60).map(|seed| random_case(40_000 + seed, (2, 12), 4).0);
    let bundled = [
        instances::i4(1, ObjectiveSpec::Tvd),
        instances::i4(2, ObjectiveSpec::Tvd),
        instances::synthetic_twelve(2, ObjectiveSpec::Tvd),
        instances::synthetic_twelve(4, ObjectiveSpec::Tvd),
    ];
    for input in tvd_instances().chain(extra).chain(bundled) {
        runs += 1;
        let t = transform(&input).unwrap();
        let s = solve_tvd_detailed(&t, input.k);
        for c in &s.clusters {
            clusters += 1;
            worst_residual = worst_residual.max(c.balance_residual);
            if c.balance_residual > 1e-9 || c.cost > 2.0 * c.relaxed_cost + 1e-12 {
                failures.push(format!(
                    "run {runs}: residual {} cost {} relaxed {}",
                    c.balance_residual, c.cost, c.relaxed_cost
                ));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{runs} runs, {clusters} clusters, max residual {worst_residual:.2e}, failures {failures:?}"
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-4
}

fn worked_instance() -> Outcome {
    let step_input = instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 });
    let t = transform(&step_input).unwrap();
    let step = solve(&step_input).unwrap();
    let f = MonotoneFunction::linear_cap(1.0).unwrap();
    let mono = solve_monotone(&t, 2, &f).unwrap().objective_value;
    let mono_opt = oracle_monotone(&t, 2, &f).unwrap().value;
    let tvd = solve_tvd_detailed(&t, 1);
    let levels: Vec<f64> = tvd.plan.campaigns.iter().map(|c| c.level).collect();
    let checks = [
        ("step count", step.metrics.satisfied_count as f64, 3.0),
        ("monotone value", mono, 3.0),
        ("monotone oracle", mono_opt, 3.6),
        ("tvd level 1", levels[0], 0.1875),
        ("tvd level 2", levels[1], 0.7),
        ("tvd", tvd.plan.tvd(&t), 0.34),
        ("cpv", step.metrics.cpv, 0.32143),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !close(*got, *want))
        .map(|(name, got, want)| format!("{name}: {got} vs {want}"))
        .collect();
    let shown: Vec<String> = checks.iter().map(|(n, g, _)| format!("{n}={g:.5}")).collect();
    outcome(
        bad.is_empty() && levels.len() == 2,
        format!("{} {:?}", shown.join(" "), bad),
    )
}

fn table_trends() -> Outcome {
    let gammas = [0.5, 0.7, 0.9, 1.0];
    let mut rows = BTreeMap::new();
    for k in [2, 4] {
        for gamma in gammas {
            let plan = solve(&instances::synthetic_twelve(k, ObjectiveSpec::Step { gamma })).unwrap();
            rows.insert((k, (gamma * 10.0) as u32), (plan.metrics.satisfied_count, plan.metrics.cpv));
        }
    }
    let mut hard = true;
    let mut soft = true;
    let mut table = Vec::new();
    for k in [2, 4] {
        let series: Vec<(usize, f64)> = gammas.iter().map(|g| rows[&(k, (g * 10.0) as u32)]).collect();
        for w in series.windows(2) {
            hard &= w[1].0 <= w[0].0;
            soft &= w[1].1 >= w[0].1 - 1e-12;
        }
        table.push(format!(
            "k={k}: {}",
            series
                .iter()
                .zip(gammas)
                .map(|((c, cpv), g)| format!("g{g}:{c}/${cpv:.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    for gamma in gammas {
        let key = (gamma * 10.0) as u32;
        hard &= rows[&(4, key)].0 >= rows[&(2, key)].0;
    }
    outcome(
        hard,
        format!(
            "{}; cpv non-decreasing in gamma (soft): {}",
            table.join("; "),
            if soft { "yes" } else { "NO (logged, not fatal)" }
        ),
    )
}

fn proportionality() -> Outcome {
    let input = instances::synthetic_twelve(4, ObjectiveSpec::Step { gamma: 0.9 });
    let truth = GroundTruth::from_demographics(&input.demographics).unwrap();
    let plan = solve(&input).unwrap();
    let campaigns = CampaignSpec::from_plan(&plan);
    let pacing = PacingConfig::default();
    let day = simulate_day(&campaigns, &truth, SimMode::Expected, &pacing, 1, 0).unwrap();
    let mut worst = 0.0_f64;
    for c in &campaigns {
        let q_sum: f64 = c.members.iter().map(|m| truth.get(m).unwrap().q).sum();
        let spent = day.campaign_spend(&c.id);
        worst = worst.max((spent - c.daily_budget).abs() / c.daily_budget);
        for r in day.records.iter().filter(|r| r.campaign_id == c.id) {
            let q_share = truth.get(&r.demographic_id).unwrap().q / q_sum;
            worst = worst.max((r.spend / spent - q_share).abs());
        }
    }
    let exact = worst <= 1e-12;

    let reps = 10_000;
    let results = replicate(&campaigns, &truth, &pacing, 42, reps).unwrap();
    let mut worst_z = 0.0_f64;
    for (s, e) in summarize(&results).iter().zip(&day.records) {
        for (mean, se, want) in [
            (s.mean_spend, s.se_spend, e.spend),
            (s.mean_conversions, s.se_conversions, e.conversions),
        ] {
            worst_z = worst_z.max((mean - want).abs() / se);
        }
    }
    outcome(
        exact && worst_z <= 4.0,
        format!("max share error {worst:.1e}; {reps} replications, max |z| {worst_z:.2}"),
    )
}

fn six_instance() -> PlanInput {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    random_instance(&mut rng, 6, 3, ObjectiveSpec::Tvd, &RandomSpec::default())
}

/// Runs every schedule day once in expected mode; returns the revealed
/// values and spend records.
fn observe(schedule: &RotationSchedule, truth: &GroundTruth) -> (Vec<Vec<f64>>, Vec<SpendRecord>) {
    let mut revealed = Vec::new();
    let mut records = Vec::new();
    for d in 0..schedule.day_count() {
        let campaigns = schedule.campaigns(d, 100.0);
        let day = simulate_day(&campaigns, truth, SimMode::Expected, &PacingConfig::default(), 0, d as u32)
            .unwrap();
        revealed.push(day.revealed.iter().map(|r| r.q_sum).collect());
        records.extend(day.records);
    }
    (revealed, records)
}

type Criterion = (&'static str, fn() -> Outcome);

type Pick = fn(&GroundTruth, &str) -> f64;

/// Largest per-demographic relative error.
fn worst_component(est: &BTreeMap<String, f64>, truth: &GroundTruth, pick: Pick) -> f64 {
    est.iter()
        .map(|(id, v)| (v / pick(truth, id) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `||est - truth|| / ||truth||` over the parameter vector.
fn vector_error(est: &BTreeMap<String, f64>, truth: &GroundTruth, pick: Pick) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0);
    for (id, v) in est {
        let x = pick(truth, id);
        diff += (v - x).powi(2);
        norm += x * x;
    }
    (diff / norm).sqrt()
}

fn learning_round_trip() -> Outcome {
    let cases: [(Vec<Demographic>, usize); 3] = [
        (instances::i4(2, ObjectiveSpec::Tvd).demographics, 2),
        (six_instance().demographics, 3),
        (instances::synthetic_twelve(4, ObjectiveSpec::Tvd).demographics, 4),
    ];
    let q_of: Pick = |t, id| t.get(id).unwrap().q;
    let phi_of: Pick = |t, id| t.get(id).unwrap().phi;
    let mut pass = true;
    let mut notes = Vec::new();
    for (ds, k) in cases {
        let n = ds.len();
        let truth = GroundTruth::from_demographics(&ds).unwrap();
        let ids: Vec<String> = ds.iter().map(|d| d.id.clone()).collect();
        let schedule = design_rotation_splits(n, k).unwrap().with_ids(ids).unwrap();
        let (revealed, records) = observe(&schedule, &truth);

        let q = infer_q(&schedule, &revealed).unwrap().as_map();
        let phi = infer_phi(&records, &q, None).unwrap();
        let exact = worst_component(&q, &truth, q_of).max(worst_component(&phi, &truth, phi_of));

        let runs: Vec<(f64, f64)> = (0..100u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let noisy: Vec<Vec<f64>> = revealed
                    .iter()
                    .map(|day| {
                        day.iter()
                            .map(|v| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                v * (1.0 + 0.01 * z)
                            })
                            .collect()
                    })
                    .collect();
                let q = infer_q(&schedule, &noisy).unwrap().as_map();
                let phi = infer_phi(&records, &q, None).unwrap();
                (
                    vector_error(&q, &truth, q_of).max(vector_error(&phi, &truth, phi_of)),
                    worst_component(&q, &truth, q_of).max(worst_component(&phi, &truth, phi_of)),
                )
            })
            .collect();
        let sorted = |pick: fn(&(f64, f64)) -> f64| {
            let mut v: Vec<f64> = runs.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let errors = sorted(|r| r.0);
        let worst = sorted(|r| r.1);
        let median = 0.5 * (errors[49] + errors[50]);
        pass &= exact <= 1e-9 && median <= 0.05;
        notes.push(format!(
            "n={n} k={k} days={} exact {exact:.1e} noisy median {median:.4} p95 {:.4} (worst single parameter: median {:.4})",
            schedule.day_count(),
            errors[94],
            0.5 * (worst[49] + worst[50])
        ));
    }
    outcome(pass, notes.join("; "))
}

fn table_one() -> Outcome {
    let mut high = 0;
    let mut low = 0;
    let mut mismatches = Vec::new();
    for (j, f) in FIELD_SPECIFICITY.iter().enumerate() {
        let campaign = format!("{}-{}", f.city, f.campaign);
        let target = (f.beta * 100.0).round();
        let log = OutcomeLog::new(vec![
            OutcomeRecord {
                campaign_id: campaign.clone(),
                demographic_id: "target".into(),
                conversions: target,
                spend: 1.0,
            },
            OutcomeRecord {
                campaign_id: campaign.clone(),
                demographic_id: "rest".into(),
                conversions: 100.0 - target,
                spend: 1.0,
            },
        ])
        .unwrap();
        let alphas: BTreeMap<String, f64> =
            [("target".to_string(), f.alpha), ("rest".to_string(), 1.0 - f.alpha)].into();
        let report = specificity(&log, &alphas, None).unwrap();
        let entry = report.entries.iter().find(|e| e.demographic_id == "target").unwrap();
        let class = classify(f.alpha, f.beta);
        if class != f.reported || entry.class != f.reported {
            mismatches.push(j);
        }
        match class {
            Specificity::High => high += 1,
            Specificity::Low => low += 1,
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("9 pairs, {high} HIGH / {low} LOW, mismatches {mismatches:?}"),
    )
}

fn episode() -> Outcome {
    let input = instances::synthetic_twelve(4, ObjectiveSpec::Step { gamma: 0.9 });
    let truth = GroundTruth::from_demographics(&input.demographics).unwrap();
    let config = EpisodeConfig::new(30, 5, SimMode::Stochastic, 7);
    let a = run_episode(&input, &truth, &config).unwrap();
    let b = run_episode(&input, &truth, &config).unwrap();
    let reproducible = a.records == b.records && a.final_phi == b.final_phi;
    let err = a.max_satisfied_share_error();
    let conversions: f64 = a.records.iter().map(|r| r.conversions).sum();
    // Sanity: realized budgets match the planned ones on the first day.
    let planned = realize_budgets(&a.periods[0].plan, &input).unwrap();
    let budget: f64 = planned.campaigns.iter().map(|c| c.daily_budget).sum();
    outcome(
        reproducible && err <= 0.05 && (budget - input.budget).abs() < 1e-6,
        format!(
            "{} satisfied, {conversions} conversions, max share error {err:.4}, reproducible {reproducible}",
            a.satisfied.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("step solver equals the exhaustive optimum", step_exactness),
        ("monotone solver within [OPT/2, OPT]", monotone_ratio),
        ("tvd: <= k+1 campaigns, one conversion, <= 2 OPT", tvd_guarantee),
        ("recentering balance and doubled-cost bound", recentering_balance),
        ("worked four-demographic instance", worked_instance),
        ("trend reproduction on the 12-demographic instance", table_trends),
        ("proportional spend contract", proportionality),
        ("learning round trip", learning_round_trip),
        ("field specificity classification", table_one),
        ("end-to-end stochastic episode", episode),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
