//! Outcome analytics: campaign specificity, parity feasibility, exact binomial
//! intervals and spend proportionality checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{PlannerError, Result};
use crate::model::{ObjectiveSpec, PlanInput};
use crate::plan::{satisfies, Plan, ReportMetrics};
use crate::sim::SpendRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub campaign_id: String,
    pub demographic_id: String,
    pub conversions: f64,
    pub spend: f64,
}

/// Observed conversions and spend per campaign and demographic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLog {
    pub records: Vec<OutcomeRecord>,
}

impl OutcomeLog {
    pub fn new(records: Vec<OutcomeRecord>) -> Result<OutcomeLog> {
        for r in &records {
            if !(r.conversions.is_finite() && r.conversions >= 0.0) {
                return Err(PlannerError::InvalidInput(format!(
                    "{}/{}: conversions must be nonnegative, got {}",
                    r.campaign_id, r.demographic_id, r.conversions
                )));
            }
            if !(r.spend.is_finite() && r.spend >= 0.0) {
                return Err(PlannerError::InvalidInput(format!(
                    "{}/{}: spend must be nonnegative, got {}",
                    r.campaign_id, r.demographic_id, r.spend
                )));
            }
        }
        Ok(OutcomeLog { records })
    }

    /// Sums simulator records over days.
    pub fn from_spend_records(records: &[SpendRecord]) -> OutcomeLog {
        let mut cells: BTreeMap<(&str, &str), (f64, f64)> = BTreeMap::new();
        for r in records {
            let cell = cells
                .entry((r.campaign_id.as_str(), r.demographic_id.as_str()))
                .or_default();
            cell.0 += r.conversions;
            cell.1 += r.spend;
        }
        OutcomeLog {
            records: cells
                .into_iter()
                .map(|((c, d), (conversions, spend))| OutcomeRecord {
                    campaign_id: c.to_string(),
                    demographic_id: d.to_string(),
                    conversions,
                    spend,
                })
                .collect(),
        }
    }

    fn by_campaign(&self) -> BTreeMap<&str, BTreeMap<&str, (f64, f64)>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, (f64, f64)>> = BTreeMap::new();
        for r in &self.records {
            let cell = out
                .entry(r.campaign_id.as_str())
                .or_default()
                .entry(r.demographic_id.as_str())
                .or_default();
            cell.0 += r.conversions;
            cell.1 += r.spend;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Specificity {
    High,
    Low,
}

/// High when a campaign's share of conversions from a demographic is at
/// least that demographic's population share.
pub fn classify(alpha: f64, beta: f64) -> Specificity {
    if beta >= alpha {
        Specificity::High
    } else {
        Specificity::Low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityEntry {
    pub campaign_id: String,
    pub demographic_id: String,
    pub alpha: f64,
    pub beta: f64,
    pub class: Specificity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityReport {
    pub entries: Vec<SpecificityEntry>,
    /// Campaigns left out because they had no conversions.
    pub excluded: Vec<String>,
}

impl SpecificityReport {
    pub fn beta(&self, campaign_id: &str, demographic_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.campaign_id == campaign_id && e.demographic_id == demographic_id)
            .map(|e| e.beta)
    }

    pub fn campaigns(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.campaign_id.as_str()).collect()
    }
}

/// `beta_ij`, the fraction of campaign `j`'s conversions that came from
/// demographic `i`, for every demographic in `alphas` and every campaign
/// with at least one conversion. With `ci_level`, integral counts also get a
/// Clopper-Pearson interval.
pub fn specificity(
    log: &OutcomeLog,
    alphas: &BTreeMap<String, f64>,
    ci_level: Option<f64>,
) -> Result<SpecificityReport> {
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (campaign, cells) in log.by_campaign() {
        for id in cells.keys() {
            if !alphas.contains_key(*id) {
                return Err(PlannerError::InvalidInput(format!(
                    "campaign {campaign} reports demographic {id} with no population share"
                )));
            }
        }
        let total: f64 = cells.values().map(|c| c.0).sum();
        if total <= 0.0 {
            log::info!("campaign {campaign} has no conversions; excluded");
            excluded.push(campaign.to_string());
            continue;
        }
        for (id, &alpha) in alphas {
            let conversions = cells.get(id.as_str()).map_or(0.0, |c| c.0);
            let beta = conversions / total;
            let ci = match ci_level {
                Some(level) if conversions.fract() == 0.0 && total.fract() == 0.0 => {
                    Some(binomial_ci(conversions as u64, total as u64, level)?)
                }
                _ => None,
            };
            entries.push(SpecificityEntry {
                campaign_id: campaign.to_string(),
                demographic_id: id.clone(),
                alpha,
                beta,
                class: classify(alpha, beta),
                ci,
            });
        }
    }
    Ok(SpecificityReport { entries, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

/// Whether some campaign in `betas` is specific enough for a demographic
/// with population share `alpha`. Mixing campaigns averages their
/// specificities, so parity is out of reach when every one falls short.
pub fn feasible_row(alpha: f64, betas: &[f64]) -> Feasibility {
    if betas.iter().any(|&b| b >= alpha) {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible
    }
}

/// Per-demographic verdict over all campaigns in `report`; a demographic
/// absent from a campaign counts as `beta = 0` there.
pub fn parity_feasibility(
    report: &SpecificityReport,
    alphas: &BTreeMap<String, f64>,
) -> BTreeMap<String, Feasibility> {
    alphas
        .iter()
        .map(|(id, &alpha)| {
            let row: Vec<f64> = report
                .entries
                .iter()
                .filter(|e| &e.demographic_id == id)
                .map(|e| e.beta)
                .collect();
            (id.clone(), feasible_row(alpha, &row))
        })
        .collect()
}

/// Root of an increasing function on `[0, 1]` by bisection.
fn bisect(mut f: impl FnMut(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper-Pearson interval for a binomial proportion at confidence `level`,
/// from quantiles of the beta distribution.
pub fn binomial_ci(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(PlannerError::Domain(
            "binomial interval is undefined for zero trials".into(),
        ));
    }
    if successes > trials {
        return Err(PlannerError::Domain(format!(
            "{successes} successes exceed {trials} trials"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(PlannerError::Domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let tail = 0.5 * (1.0 - level);
    let (x, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        bisect(|p| beta_reg(x, n - x + 1.0, p), tail)
    };
    let upper = if successes == trials {
        1.0
    } else {
        bisect(|p| beta_reg(x + 1.0, n - x, p), 1.0 - tail)
    };
    Ok((lower, upper))
}

/// Within-campaign spend share over `q` share for one demographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendRatio {
    pub campaign_id: String,
    pub demographic_id: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendRatioReport {
    pub ratios: Vec<SpendRatio>,
    pub min: f64,
    pub max: f64,
}

/// For every campaign, `(spend_i / sum spend) / (q_i / sum q)` over its
/// members. Proportional pacing gives 1 for everyone.
pub fn proportional_spend_ratio(
    log: &OutcomeLog,
    q: &BTreeMap<String, f64>,
) -> Result<SpendRatioReport> {
    let mut ratios = Vec::new();
    for (campaign, cells) in log.by_campaign() {
        let spend: f64 = cells.values().map(|c| c.1).sum();
        if spend <= 0.0 {
            return Err(PlannerError::InvalidInput(format!(
                "campaign {campaign} has no spend"
            )));
        }
        let mut q_sum = 0.0;
        for id in cells.keys() {
            q_sum += q.get(*id).copied().ok_or_else(|| {
                PlannerError::InvalidInput(format!("no q for demographic {id}"))
            })?;
        }
        for (id, cell) in &cells {
            ratios.push(SpendRatio {
                campaign_id: campaign.to_string(),
                demographic_id: id.to_string(),
                ratio: (cell.1 / spend) / (q[*id] / q_sum),
            });
        }
    }
    let min = ratios.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max = ratios.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(SpendRatioReport { ratios, min, max })
}

/// Recomputes count, cost per conversion and size ratio of a plan against
/// `input`. Step and monotone objectives count `rho_i >= gamma`; the distance
/// objective counts every demographic.
pub fn report_metrics(plan: &Plan, input: &PlanInput) -> Result<ReportMetrics> {
    let q: BTreeMap<&str, f64> = input
        .demographics
        .iter()
        .map(|d| (d.id.as_str(), d.q))
        .collect();
    let total_q: f64 = q.values().sum();
    let mut cpv = 0.0;
    let mut smallest = f64::INFINITY;
    for c in &plan.campaigns {
        if c.members.is_empty() {
            continue;
        }
        let mut q_sum = 0.0;
        for m in &c.members {
            q_sum += q.get(m.as_str()).copied().ok_or_else(|| {
                PlannerError::InvalidPlan(format!("campaign member {m} not in the input"))
            })?;
        }
        cpv += c.level * q_sum;
        smallest = smallest.min(q_sum);
    }
    let satisfied_count = match input.objective {
        ObjectiveSpec::Step { gamma } | ObjectiveSpec::MonotoneLinear { gamma } => {
            plan.rho.values().filter(|&&r| satisfies(r, gamma)).count()
        }
        ObjectiveSpec::Tvd => input.demographics.len(),
    };
    Ok(ReportMetrics {
        satisfied_count,
        cpv,
        size_ratio: if smallest.is_finite() {
            smallest / total_q
        } else {
            0.0
        },
    })
}

/// One column of the reported field specificity measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpecificity {
    pub city: &'static str,
    pub campaign: &'static str,
    pub alpha: f64,
    pub beta: f64,
    pub ci: (f64, f64),
    /// Classification the measurement was reported with.
    pub reported: Specificity,
}

/// Specificity of targeted campaigns measured in two municipal field studies.
pub const FIELD_SPECIFICITY: [FieldSpecificity; 9] = [
    field("Durham", "Educ", 0.13, 0.12, (0.06, 0.2), Specificity::Low),
    field("Durham", "AfrAm1", 0.37, 0.21, (0.16, 0.27), Specificity::Low),
    field("Durham", "Hisp1", 0.14, 0.12, (0.05, 0.22), Specificity::Low),
    field("Durham", "AfrAmLAL", 0.37, 0.21, (0.08, 0.39), Specificity::Low),
    field("Durham", "AfrAmC", 0.37, 0.69, (0.57, 0.79), Specificity::High),
    field("Greensboro", "YoungC", 0.55, 1.0, (0.93, 1.0), Specificity::High),
    field("Greensboro", "MediumC", 0.30, 0.93, (0.82, 0.98), Specificity::High),
    field("Greensboro", "OldC", 0.15, 0.91, (0.76, 0.99), Specificity::High),
    field("Greensboro", "AfrAmC", 0.41, 0.70, (0.6, 0.81), Specificity::High),
];

const fn field(
    city: &'static str,
    campaign: &'static str,
    alpha: f64,
    beta: f64,
    ci: (f64, f64),
    reported: Specificity,
) -> FieldSpecificity {
    FieldSpecificity {
        city,
        campaign,
        alpha,
        beta,
        ci,
        reported,
    }
}
