//! Proportional-pacing platform simulator.
//!
//! A campaign with daily budget `B` and members `S` spends on demographic
//! `i` in proportion to `q_i`, and each dollar spent on `i` yields `phi_i`
//! expected conversions. Stochastic days thin each demographic's potential
//! impressions with probability `B / B_hat` and draw Poisson conversions.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::learning::infer_phi;
use crate::model::{Demographic, ObjectiveSpec, PlanInput};
use crate::plan::{predicted_shares, satisfies, Plan};
use crate::solve::solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub q: f64,
    pub phi: f64,
}

/// Hidden per-demographic parameters driving the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    entries: BTreeMap<String, TruthEntry>,
}

impl GroundTruth {
    pub fn new<I, S>(entries: I) -> Result<GroundTruth>
    where
        I: IntoIterator<Item = (S, f64, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        let mut duplicates = Vec::new();
        for (id, q, phi) in entries {
            let id = id.into();
            for (name, v) in [("q", q), ("phi", phi)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(PlannerError::InvalidDemographic {
                        id,
                        reason: format!("true {name} must be positive, got {v}"),
                    });
                }
            }
            if map.insert(id.clone(), TruthEntry { q, phi }).is_some() {
                duplicates.push(id);
            }
        }
        if !duplicates.is_empty() {
            return Err(PlannerError::DuplicateIds(duplicates));
        }
        Ok(GroundTruth { entries: map })
    }

    pub fn from_demographics(demographics: &[Demographic]) -> Result<GroundTruth> {
        GroundTruth::new(demographics.iter().map(|d| (d.id.clone(), d.q, d.phi)))
    }

    pub fn get(&self, id: &str) -> Option<TruthEntry> {
        self.entries.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, id: &str) -> Result<TruthEntry> {
        self.get(id).ok_or_else(|| {
            PlannerError::InvalidInput(format!("demographic {id} has no ground truth"))
        })
    }
}

/// What the platform is told: members and a daily budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub id: String,
    pub members: Vec<String>,
    pub daily_budget: f64,
}

impl CampaignSpec {
    pub fn new(id: impl Into<String>, members: Vec<String>, daily_budget: f64) -> Self {
        CampaignSpec {
            id: id.into(),
            members,
            daily_budget,
        }
    }

    pub fn from_plan(plan: &Plan) -> Vec<CampaignSpec> {
        plan.campaigns
            .iter()
            .map(|c| CampaignSpec::new(c.id.clone(), c.members.clone(), c.daily_budget))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Expected,
    Stochastic,
}

/// How much a campaign could spend on a demographic without pacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Unpaced {
    /// Potential spend is this multiple of the daily budget, split by `q`.
    BudgetMultiple(f64),
    /// Potential spend on demographic `i` is `dollars_per_q * q_i`.
    DollarsPerQ(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacingConfig {
    pub unpaced: Unpaced,
    /// Dollars per impression; sets the granularity of stochastic spend.
    pub impression_cost: f64,
}

impl Default for PacingConfig {
    fn default() -> Self {
        PacingConfig {
            unpaced: Unpaced::BudgetMultiple(2.0),
            impression_cost: 0.01,
        }
    }
}

impl PacingConfig {
    fn validate(&self) -> Result<()> {
        let v = match self.unpaced {
            Unpaced::BudgetMultiple(m) => m,
            Unpaced::DollarsPerQ(d) => d,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(PlannerError::InvalidInput(format!(
                "unpaced spend parameter must be positive, got {v}"
            )));
        }
        if !(self.impression_cost.is_finite() && self.impression_cost > 0.0) {
            return Err(PlannerError::InvalidInput(format!(
                "impression cost must be positive, got {}",
                self.impression_cost
            )));
        }
        Ok(())
    }
}

/// One observed cell: spend and conversions of a demographic in a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendRecord {
    pub day: u32,
    pub campaign_id: String,
    pub demographic_id: String,
    pub spend: f64,
    /// Real-valued in expected mode, a count in stochastic mode.
    pub conversions: f64,
}

/// Scaling factor `sum_{i in S_j} q_i` the platform reveals for a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revealed {
    pub campaign_id: String,
    pub q_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Underspend {
    pub campaign_id: String,
    pub budget: f64,
    /// Spend if every potential impression were bought.
    pub unpaced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub day: u32,
    pub records: Vec<SpendRecord>,
    pub revealed: Vec<Revealed>,
    pub underspend: Vec<Underspend>,
}

impl DayResult {
    pub fn campaign_spend(&self, campaign_id: &str) -> f64 {
        self.records
            .iter()
            .filter(|r| r.campaign_id == campaign_id)
            .map(|r| r.spend)
            .sum()
    }
}

fn check_campaigns(campaigns: &[CampaignSpec], truth: &GroundTruth) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in campaigns {
        if !(c.daily_budget.is_finite() && c.daily_budget >= 0.0) {
            return Err(PlannerError::InvalidInput(format!(
                "campaign {} has budget {}",
                c.id, c.daily_budget
            )));
        }
        if c.members.is_empty() && c.daily_budget > 0.0 {
            return Err(PlannerError::InvalidInput(format!(
                "campaign {} has a budget but no members",
                c.id
            )));
        }
        for m in &c.members {
            truth.lookup(m)?;
            if !seen.insert(m.as_str()) {
                return Err(PlannerError::InvalidInput(format!(
                    "demographic {m} is targeted by more than one campaign"
                )));
            }
        }
    }
    Ok(())
}

/// Simulates one day on an explicit generator.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    campaigns: &[CampaignSpec],
    truth: &GroundTruth,
    mode: SimMode,
    pacing: &PacingConfig,
    day: u32,
    rng: &mut R,
) -> Result<DayResult> {
    check_campaigns(campaigns, truth)?;
    pacing.validate()?;
    let mut records = Vec::new();
    let mut revealed = Vec::with_capacity(campaigns.len());
    let mut underspend = Vec::new();
    for c in campaigns {
        let members: Vec<(&String, TruthEntry)> = c
            .members
            .iter()
            .map(|m| truth.lookup(m).map(|e| (m, e)))
            .collect::<Result<_>>()?;
        let q_sum: f64 = members.iter().map(|(_, e)| e.q).sum();
        revealed.push(Revealed {
            campaign_id: c.id.clone(),
            q_sum,
        });
        if members.is_empty() {
            continue;
        }
        let budget = c.daily_budget;
        let potential = |q: f64| match pacing.unpaced {
            Unpaced::BudgetMultiple(m) => m * budget * q / q_sum,
            Unpaced::DollarsPerQ(d) => d * q,
        };
        let unpaced_total: f64 = members.iter().map(|(_, e)| potential(e.q)).sum();
        let accept = if unpaced_total > 0.0 {
            (budget / unpaced_total).min(1.0)
        } else {
            0.0
        };
        if mode == SimMode::Stochastic && budget > unpaced_total {
            warn!(
                "campaign {} budget {budget} exceeds unpaced spend {unpaced_total}; underspending",
                c.id
            );
            underspend.push(Underspend {
                campaign_id: c.id.clone(),
                budget,
                unpaced: unpaced_total,
            });
        }
        for (id, e) in members {
            let (spend, conversions) = match mode {
                SimMode::Expected => {
                    let spend = budget * e.q / q_sum;
                    (spend, e.phi * spend)
                }
                SimMode::Stochastic => {
                    let cap = potential(e.q);
                    let impressions = (cap / pacing.impression_cost).ceil().max(1.0);
                    let price = cap / impressions;
                    let bought = Binomial::new(impressions as u64, accept)
                        .map_err(|err| PlannerError::Domain(err.to_string()))?
                        .sample(rng);
                    let spend = bought as f64 * price;
                    let mean = e.phi * spend;
                    let conversions = if mean > 0.0 {
                        Poisson::new(mean)
                            .map_err(|err| PlannerError::Domain(err.to_string()))?
                            .sample(rng)
                    } else {
                        0.0
                    };
                    (spend, conversions)
                }
            };
            records.push(SpendRecord {
                day,
                campaign_id: c.id.clone(),
                demographic_id: id.clone(),
                spend,
                conversions,
            });
        }
    }
    Ok(DayResult {
        day,
        records,
        revealed,
        underspend,
    })
}

/// Generator for `(seed, stream)`; every day and replication owns a stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates day `day` of a run seeded with `seed`.
pub fn simulate_day(
    campaigns: &[CampaignSpec],
    truth: &GroundTruth,
    mode: SimMode,
    pacing: &PacingConfig,
    seed: u64,
    day: u32,
) -> Result<DayResult> {
    let mut rng = stream_rng(seed, day as u64);
    simulate_with_rng(campaigns, truth, mode, pacing, day, &mut rng)
}

/// Independent stochastic replications of one day, in parallel.
/// Replication `r` uses stream `r` of `seed`.
pub fn replicate(
    campaigns: &[CampaignSpec],
    truth: &GroundTruth,
    pacing: &PacingConfig,
    seed: u64,
    replications: usize,
) -> Result<Vec<DayResult>> {
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            simulate_with_rng(campaigns, truth, SimMode::Stochastic, pacing, 0, &mut rng)
        })
        .collect()
}

/// Sample mean and standard error of one cell across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub campaign_id: String,
    pub demographic_id: String,
    pub mean_spend: f64,
    pub se_spend: f64,
    pub mean_conversions: f64,
    pub se_conversions: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-cell statistics; every replication must list the same cells in the
/// same order, as [`replicate`] guarantees.
pub fn summarize(results: &[DayResult]) -> Vec<CellStats> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    first
        .records
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let spend: Vec<f64> = results.iter().map(|r| r.records[c].spend).collect();
            let conv: Vec<f64> = results.iter().map(|r| r.records[c].conversions).collect();
            let (mean_spend, se_spend) = mean_se(&spend);
            let (mean_conversions, se_conversions) = mean_se(&conv);
            CellStats {
                campaign_id: cell.campaign_id.clone(),
                demographic_id: cell.demographic_id.clone(),
                mean_spend,
                se_spend,
                mean_conversions,
                se_conversions,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub horizon: u32,
    pub refit_period: u32,
    pub mode: SimMode,
    pub seed: u64,
    pub pacing: PacingConfig,
}

impl EpisodeConfig {
    pub fn new(horizon: u32, refit_period: u32, mode: SimMode, seed: u64) -> Self {
        EpisodeConfig {
            horizon,
            refit_period,
            mode,
            seed,
            pacing: PacingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodLog {
    pub index: usize,
    pub start_day: u32,
    pub days: u32,
    /// Conversion-rate estimates the plan was solved with.
    pub phi_estimates: BTreeMap<String, f64>,
    pub plan: Plan,
    /// Predicted `rho_i * alpha_i` under the estimates.
    pub planned_shares: BTreeMap<String, f64>,
    /// Observed fraction of the period's conversions.
    pub realized_shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeLog {
    pub objective: ObjectiveSpec,
    pub periods: Vec<PeriodLog>,
    pub final_phi: BTreeMap<String, f64>,
    /// Day-weighted average of the planned shares.
    pub planned_cumulative: BTreeMap<String, f64>,
    /// Fraction of all conversions over the horizon.
    pub realized_cumulative: BTreeMap<String, f64>,
    /// Demographics that reach the objective threshold in every period's plan
    /// (every demographic for distance objectives).
    pub satisfied: Vec<String>,
    pub underspend_days: usize,
    #[serde(skip)]
    pub records: Vec<SpendRecord>,
}

impl EpisodeLog {
    /// Largest gap between planned and realized cumulative shares over the
    /// satisfied demographics.
    pub fn max_satisfied_share_error(&self) -> f64 {
        self.satisfied
            .iter()
            .map(|id| (self.planned_cumulative[id] - self.realized_cumulative[id]).abs())
            .fold(0.0, f64::max)
    }
}

fn shares_of(records: &[SpendRecord], ids: &[String]) -> BTreeMap<String, f64> {
    let mut by_id: BTreeMap<String, f64> = ids.iter().map(|id| (id.clone(), 0.0)).collect();
    let mut total = 0.0;
    for r in records {
        *by_id.entry(r.demographic_id.clone()).or_default() += r.conversions;
        total += r.conversions;
    }
    if total > 0.0 {
        for v in by_id.values_mut() {
            *v /= total;
        }
    }
    by_id
}

/// Solve, run for `refit_period` days, re-estimate `phi` from the period's
/// conversions with `q` held fixed, and repeat until `horizon` days have run.
///
/// `input` carries the initial estimates of `q` and `phi`; `truth` drives the
/// simulator.
pub fn run_episode(
    input: &PlanInput,
    truth: &GroundTruth,
    config: &EpisodeConfig,
) -> Result<EpisodeLog> {
    if config.horizon == 0 || config.refit_period == 0 {
        return Err(PlannerError::InvalidInput(
            "horizon and refit period must be positive".into(),
        ));
    }
    input.validate()?;
    let ids: Vec<String> = input.demographics.iter().map(|d| d.id.clone()).collect();
    let q_hat: BTreeMap<String, f64> = input
        .demographics
        .iter()
        .map(|d| (d.id.clone(), d.q))
        .collect();
    let mut estimates = input.clone();
    let mut periods = Vec::new();
    let mut records = Vec::new();
    let mut underspend_days = 0;
    let mut satisfied: BTreeSet<String> = ids.iter().cloned().collect();

    let mut day = 0;
    while day < config.horizon {
        let days = config.refit_period.min(config.horizon - day);
        let plan = solve(&estimates)?;
        let t = crate::model::transform(&estimates)?;
        let planned_shares = predicted_shares(&plan, &t)?
            .into_iter()
            .map(|(id, s)| (id, s.share))
            .collect();
        if let Some(gamma) = estimates.objective.gamma() {
            satisfied.retain(|id| satisfies(plan.rho[id], gamma));
        }
        let campaigns = CampaignSpec::from_plan(&plan);
        let mut period_records = Vec::new();
        for d in day..day + days {
            let result = simulate_day(&campaigns, truth, config.mode, &config.pacing, config.seed, d)?;
            if !result.underspend.is_empty() {
                underspend_days += 1;
            }
            period_records.extend(result.records);
        }
        let phi_estimates = estimates
            .demographics
            .iter()
            .map(|d| (d.id.clone(), d.phi))
            .collect::<BTreeMap<_, _>>();
        let refit = infer_phi(&period_records, &q_hat, Some(&phi_estimates))?;
        for d in &mut estimates.demographics {
            d.phi = refit[&d.id];
        }
        periods.push(PeriodLog {
            index: periods.len(),
            start_day: day,
            days,
            phi_estimates,
            plan,
            planned_shares,
            realized_shares: shares_of(&period_records, &ids),
        });
        records.extend(period_records);
        day += days;
    }

    let mut planned_cumulative: BTreeMap<String, f64> =
        ids.iter().map(|id| (id.clone(), 0.0)).collect();
    for p in &periods {
        for (id, s) in &p.planned_shares {
            *planned_cumulative.get_mut(id).expect("known id") +=
                s * p.days as f64 / config.horizon as f64;
        }
    }
    Ok(EpisodeLog {
        objective: input.objective,
        final_phi: estimates
            .demographics
            .iter()
            .map(|d| (d.id.clone(), d.phi))
            .collect(),
        realized_cumulative: shares_of(&records, &ids),
        planned_cumulative,
        satisfied: satisfied.into_iter().collect(),
        underspend_days,
        periods,
        records,
    })
}
