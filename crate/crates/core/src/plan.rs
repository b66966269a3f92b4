//! Campaign plans: level assignments produced by the solvers, their
//! rescaling to exactly one expected conversion, and conversion into dollar
//! budgets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::model::{PlanInput, TransformedInput};

/// Tolerance on the one-expected-conversion identity of a finalized plan.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Relative slack when testing `rho >= gamma`; rescaling multiplies levels by
/// a float factor and must not flip a demographic sitting exactly on its level.
pub const SATISFACTION_RTOL: f64 = 1e-9;

pub(crate) fn satisfies(rho: f64, threshold: f64) -> bool {
    rho >= threshold * (1.0 - SATISFACTION_RTOL)
}

/// One campaign in solver coordinates: members are positions in the sorted
/// [`TransformedInput`], `level` is the normalized per-weight spend `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGroup {
    pub members: Vec<usize>,
    pub level: f64,
}

impl LevelGroup {
    pub fn new(mut members: Vec<usize>, level: f64) -> Self {
        members.sort_unstable();
        LevelGroup { members, level }
    }

    pub fn w_sum(&self, t: &TransformedInput) -> f64 {
        self.members.iter().map(|&p| t.w(p)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelPlan {
    pub groups: Vec<LevelGroup>,
}

impl LevelPlan {
    pub fn new(groups: Vec<LevelGroup>) -> Self {
        LevelPlan { groups }
    }

    /// Expected conversions `sum_j Y_j * w_sum_j`.
    pub fn conversions(&self, t: &TransformedInput) -> f64 {
        self.groups.iter().map(|g| g.level * g.w_sum(t)).sum()
    }

    /// `rho` per sorted position; unassigned positions get 0.
    pub fn rho(&self, t: &TransformedInput) -> Vec<f64> {
        let mut rho = vec![0.0; t.len()];
        for g in &self.groups {
            for &p in &g.members {
                rho[p] = g.level / t.beta(p);
            }
        }
        rho
    }

    /// Campaign index per sorted position (`None` when unassigned).
    pub fn assignment(&self, n: usize) -> Vec<Option<usize>> {
        let mut sigma = vec![None; n];
        for (j, g) in self.groups.iter().enumerate() {
            for &p in &g.members {
                sigma[p] = Some(j);
            }
        }
        sigma
    }

    fn scaled(&self, factor: f64) -> LevelPlan {
        LevelPlan {
            groups: self
                .groups
                .iter()
                .map(|g| LevelGroup {
                    members: g.members.clone(),
                    level: g.level * factor,
                })
                .collect(),
        }
    }
}

/// Multiplies all levels so that expected conversions become exactly one.
///
/// Every `rho` grows by the same factor, so monotone objectives never decrease.
pub fn rescale_to_one(levels: &LevelPlan, t: &TransformedInput) -> Result<LevelPlan> {
    let total = levels.conversions(t);
    if !(total.is_finite() && total > 0.0) {
        return Err(PlannerError::DegeneratePlan(format!(
            "expected conversions are {total}; nothing to rescale"
        )));
    }
    Ok(levels.scaled(1.0 / total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: String,
    pub members: Vec<String>,
    /// Normalized per-weight spend.
    pub level: f64,
    /// Budget needed for this campaign's share of one expected conversion.
    pub b: f64,
    /// Dollars per day, set by [`realize_budgets`].
    pub daily_budget: f64,
    pub q_sum: f64,
    pub w_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub satisfied_count: usize,
    /// Dollars per expected conversion, `sum_j b_j`.
    pub cpv: f64,
    /// Smallest campaign's `q_sum` over the total `q`.
    pub size_ratio: f64,
}

impl ReportMetrics {
    /// `threshold` is the `rho` a demographic must reach to count as
    /// satisfied; `None` counts every demographic (distance objectives).
    pub fn compute(plan: &Plan, threshold: Option<f64>, total_q: f64) -> ReportMetrics {
        let satisfied_count = match threshold {
            Some(th) => plan.rho.values().filter(|&&r| satisfies(r, th)).count(),
            None => plan.rho.len(),
        };
        let cpv = plan.campaigns.iter().map(|c| c.b).sum();
        let size_ratio = plan
            .campaigns
            .iter()
            .filter(|c| !c.members.is_empty())
            .map(|c| c.q_sum)
            .min_by(f64::total_cmp)
            .map_or(0.0, |m| m / total_q);
        ReportMetrics {
            satisfied_count,
            cpv,
            size_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub campaigns: Vec<Campaign>,
    pub unassigned: Vec<String>,
    /// Demographic id to 1-based campaign index; 0 means unassigned.
    pub sigma: BTreeMap<String, usize>,
    pub rho: BTreeMap<String, f64>,
    pub objective_value: f64,
    pub metrics: ReportMetrics,
}

impl Plan {
    /// Builds a plan from solver levels. Empty groups are dropped and
    /// campaigns are ordered by ascending level.
    pub fn from_levels(
        t: &TransformedInput,
        levels: &LevelPlan,
        objective_value: f64,
        threshold: Option<f64>,
    ) -> Plan {
        let mut groups: Vec<&LevelGroup> =
            levels.groups.iter().filter(|g| !g.members.is_empty()).collect();
        groups.sort_by(|a, b| {
            a.level
                .total_cmp(&b.level)
                .then_with(|| a.members.cmp(&b.members))
        });

        let mut sigma: BTreeMap<String, usize> =
            t.entries().iter().map(|e| (e.id.clone(), 0)).collect();
        let mut rho: BTreeMap<String, f64> =
            t.entries().iter().map(|e| (e.id.clone(), 0.0)).collect();
        let mut campaigns = Vec::with_capacity(groups.len());
        for (j, g) in groups.iter().enumerate() {
            let mut q_sum = 0.0;
            let mut w_sum = 0.0;
            let mut members = Vec::with_capacity(g.members.len());
            for &p in &g.members {
                let e = t.entry(p);
                q_sum += e.q;
                w_sum += e.w;
                members.push(e.id.clone());
                sigma.insert(e.id.clone(), j + 1);
                rho.insert(e.id.clone(), g.level / e.beta);
            }
            campaigns.push(Campaign {
                id: format!("c{}", j + 1),
                members,
                level: g.level,
                b: g.level * q_sum,
                daily_budget: 0.0,
                q_sum,
                w_sum,
            });
        }
        let unassigned = t
            .entries()
            .iter()
            .filter(|e| sigma[&e.id] == 0)
            .map(|e| e.id.clone())
            .collect();

        let mut plan = Plan {
            campaigns,
            unassigned,
            sigma,
            rho,
            objective_value,
            metrics: ReportMetrics {
                satisfied_count: 0,
                cpv: 0.0,
                size_ratio: 0.0,
            },
        };
        plan.metrics = ReportMetrics::compute(&plan, threshold, t.total_q());
        plan
    }

    /// Expected conversions `sum_j Y_j * w_sum_j`.
    pub fn conversions(&self) -> f64 {
        self.campaigns.iter().map(|c| c.level * c.w_sum).sum()
    }

    pub fn campaign_of(&self, id: &str) -> Option<&Campaign> {
        match self.sigma.get(id) {
            Some(&j) if j > 0 => self.campaigns.get(j - 1),
            _ => None,
        }
    }

    /// Total variation `sum_i alpha_i |1 - rho_i|`.
    pub fn tvd(&self, t: &TransformedInput) -> f64 {
        t.entries()
            .iter()
            .map(|e| e.alpha * (1.0 - self.rho[&e.id]).abs())
            .sum()
    }

    /// Checks the structural invariants of a finalized plan: campaigns and the
    /// unassigned set partition the demographics, `rho = Y / beta`,
    /// `b = Y * q_sum`, and predicted shares sum to one.
    pub fn validate(&self, t: &TransformedInput) -> Result<()> {
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (j, c) in self.campaigns.iter().enumerate() {
            if c.members.is_empty() && c.level > 0.0 {
                return Err(PlannerError::InvalidPlan(format!(
                    "campaign {} has a positive level but no members",
                    c.id
                )));
            }
            for m in &c.members {
                if owner.insert(m, j + 1).is_some() {
                    return Err(PlannerError::InvalidPlan(format!(
                        "demographic {m} appears in more than one campaign"
                    )));
                }
            }
        }
        for u in &self.unassigned {
            if owner.insert(u, 0).is_some() {
                return Err(PlannerError::InvalidPlan(format!(
                    "demographic {u} is both assigned and unassigned"
                )));
            }
        }
        if owner.len() != t.len() {
            return Err(PlannerError::InvalidPlan(format!(
                "plan covers {} of {} demographics",
                owner.len(),
                t.len()
            )));
        }
        let mut share_sum = 0.0;
        for e in t.entries() {
            let Some(&j) = owner.get(e.id.as_str()) else {
                return Err(PlannerError::InvalidPlan(format!("{} not covered", e.id)));
            };
            if self.sigma.get(&e.id) != Some(&j) {
                return Err(PlannerError::InvalidPlan(format!(
                    "sigma disagrees with membership for {}",
                    e.id
                )));
            }
            let expected = if j == 0 {
                0.0
            } else {
                self.campaigns[j - 1].level / e.beta
            };
            let rho = self.rho.get(&e.id).copied().unwrap_or(f64::NAN);
            if (rho - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(PlannerError::InvalidPlan(format!(
                    "rho for {} is {rho}, expected {expected}",
                    e.id
                )));
            }
            share_sum += rho * e.alpha;
        }
        for c in &self.campaigns {
            if (c.b - c.level * c.q_sum).abs() > 1e-9 * c.b.abs().max(1.0) {
                return Err(PlannerError::InvalidPlan(format!(
                    "campaign {} budget {} does not equal level * q_sum",
                    c.id, c.b
                )));
            }
        }
        if (share_sum - 1.0).abs() > CONSERVATION_TOLERANCE {
            return Err(PlannerError::InvalidPlan(format!(
                "predicted shares sum to {share_sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Splits the daily budget across campaigns in proportion to `b_j = Y_j * q_sum_j`.
pub fn realize_budgets(plan: &Plan, input: &PlanInput) -> Result<Plan> {
    let q: BTreeMap<&str, f64> = input
        .demographics
        .iter()
        .map(|d| (d.id.as_str(), d.q))
        .collect();
    let mut out = plan.clone();
    for c in &mut out.campaigns {
        let mut q_sum = 0.0;
        for m in &c.members {
            q_sum += q.get(m.as_str()).copied().ok_or_else(|| {
                PlannerError::InvalidPlan(format!("campaign member {m} not in the input"))
            })?;
        }
        c.q_sum = q_sum;
        c.b = c.level * q_sum;
    }
    let total: f64 = out.campaigns.iter().map(|c| c.b).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(PlannerError::DegeneratePlan(
            "all campaign budgets are zero".into(),
        ));
    }
    for c in &mut out.campaigns {
        c.daily_budget = c.b / total * input.budget;
    }
    out.metrics.cpv = total;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub rho: f64,
    /// Predicted fraction of all conversions, `rho * alpha`.
    pub share: f64,
}

/// Predicted `rho_i` and conversion share `rho_i * alpha_i` per demographic.
pub fn predicted_shares(
    plan: &Plan,
    t: &TransformedInput,
) -> Result<BTreeMap<String, Share>> {
    plan.validate(t)?;
    Ok(t.entries()
        .iter()
        .map(|e| {
            let rho = plan
                .campaign_of(&e.id)
                .map_or(0.0, |c| c.level / e.beta);
            (
                e.id.clone(),
                Share {
                    rho,
                    share: rho * e.alpha,
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::{transform, ObjectiveSpec};

    fn i4_step_levels(t: &TransformedInput) -> LevelPlan {
        let pos = |id: &str| t.position(id).unwrap();
        LevelPlan::new(vec![
            LevelGroup::new(vec![pos("d3"), pos("d4")], 0.25),
            LevelGroup::new(vec![pos("d2")], 0.5),
        ])
    }

    #[test]
    fn rescale_i4_step_plan() {
        let input = instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 });
        let t = transform(&input).unwrap();
        let levels = i4_step_levels(&t);
        assert!((levels.conversions(&t) - 0.7).abs() < 1e-12);
        let scaled = rescale_to_one(&levels, &t).unwrap();
        assert!((scaled.groups[0].level - 0.357142857).abs() < 1e-6);
        assert!((scaled.groups[1].level - 0.714285714).abs() < 1e-6);
        assert!((scaled.conversions(&t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescale_identity_and_degenerate() {
        let input = instances::i4(2, ObjectiveSpec::Tvd);
        let t = transform(&input).unwrap();
        let all = LevelPlan::new(vec![LevelGroup::new((0..4).collect(), 1.0 / 2.6)]);
        let s = rescale_to_one(&all, &t).unwrap();
        assert!((s.groups[0].level - all.groups[0].level).abs() < 1e-15);
        assert!(matches!(
            rescale_to_one(&LevelPlan::default(), &t),
            Err(PlannerError::DegeneratePlan(_))
        ));
    }

    #[test]
    fn realize_budgets_unscaled_i4() {
        let input = instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 }).with_budget(100.0);
        let t = transform(&input).unwrap();
        let plan = Plan::from_levels(&t, &i4_step_levels(&t), 3.0, Some(1.0));
        let plan = realize_budgets(&plan, &input).unwrap();
        assert!((plan.campaigns[0].b - 0.075).abs() < 1e-12);
        assert!((plan.campaigns[1].b - 0.15).abs() < 1e-12);
        assert!((plan.campaigns[0].daily_budget - 33.333333).abs() < 1e-4);
        assert!((plan.campaigns[1].daily_budget - 66.666667).abs() < 1e-4);
        let total: f64 = plan.campaigns.iter().map(|c| c.daily_budget).sum();
        assert!((total - 100.0).abs() < 1e-6);
    }

    #[test]
    fn realize_budgets_single_campaign_gets_everything() {
        let input = instances::i4(1, ObjectiveSpec::Tvd).with_budget(50.0);
        let t = transform(&input).unwrap();
        let levels = LevelPlan::new(vec![LevelGroup::new(vec![0, 1], 0.3)]);
        let plan = realize_budgets(&Plan::from_levels(&t, &levels, 0.0, None), &input).unwrap();
        assert!((plan.campaigns[0].daily_budget - 50.0).abs() < 1e-12);
    }

    #[test]
    fn realize_budgets_rejects_all_zero() {
        let input = instances::i4(1, ObjectiveSpec::Tvd);
        let t = transform(&input).unwrap();
        let levels = LevelPlan::new(vec![LevelGroup::new(vec![0], 0.0)]);
        let plan = Plan::from_levels(&t, &levels, 0.0, None);
        assert!(matches!(
            realize_budgets(&plan, &input),
            Err(PlannerError::DegeneratePlan(_))
        ));
    }

    #[test]
    fn predicted_shares_i4_rescaled() {
        let input = instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 });
        let t = transform(&input).unwrap();
        let levels = rescale_to_one(&i4_step_levels(&t), &t).unwrap();
        let plan = Plan::from_levels(&t, &levels, 3.0, Some(1.0));
        let shares = predicted_shares(&plan, &t).unwrap();
        let expect = [("d1", 0.0), ("d2", 0.428571), ("d3", 0.285714), ("d4", 0.285714)];
        for (id, s) in expect {
            assert!((shares[id].share - s).abs() < 1e-5, "{id}");
        }
        let total: f64 = shares.values().map(|s| s.share).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(plan.metrics.satisfied_count, 3);
        assert!((plan.metrics.cpv - 0.32143).abs() < 1e-4);
        assert!((plan.metrics.size_ratio - 0.3).abs() < 1e-12);
    }

    #[test]
    fn predicted_shares_rejects_unfinalized_plan() {
        let input = instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 });
        let t = transform(&input).unwrap();
        let plan = Plan::from_levels(&t, &i4_step_levels(&t), 3.0, Some(1.0));
        assert!(predicted_shares(&plan, &t).is_err());
    }

    #[test]
    fn single_demographic_receives_everything() {
        let input = instances::single(0.05);
        let t = transform(&input).unwrap();
        let levels = rescale_to_one(&LevelPlan::new(vec![LevelGroup::new(vec![0], 1.0)]), &t)
            .unwrap();
        let plan = Plan::from_levels(&t, &levels, 1.0, Some(1.0));
        let shares = predicted_shares(&plan, &t).unwrap();
        assert!((shares["only"].rho - 1.0).abs() < 1e-12);
        assert!((plan.metrics.cpv - 20.0).abs() < 1e-9);
        assert_eq!(plan.metrics.size_ratio, 1.0);
    }
}
