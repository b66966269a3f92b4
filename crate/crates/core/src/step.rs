//! Exact solver for the gamma-step objective.
//!
//! In transformed coordinates a demographic at sorted position `i` is
//! satisfied when its campaign's level reaches `beta_hat_i = gamma * beta_i`,
//! and a satisfied demographic always sits in the lowest campaign whose level
//! covers it. Optimal levels are therefore drawn from the `beta_hat` values
//! and each campaign owns a contiguous range of sorted positions, which the
//! table in [`StepTable`] searches exhaustively.

use crate::error::Result;
use crate::model::{validate_gamma, TransformedInput};
use crate::plan::{rescale_to_one, LevelGroup, LevelPlan, Plan};

/// Slack on the at-most-one-conversion budget.
pub const FEASIBILITY_TOL: f64 = 1e-12;

const TIE_EPS: f64 = 1e-12;

/// Minimum expected conversions needed to satisfy `m` demographics among
/// sorted positions `lo..hi` (the half-open range of 0-based positions, i.e.
/// `(lo, hi]` in 1-based numbering) with one campaign at `level`.
///
/// Every item has unit profit and a common level factor, so the optimal
/// selection is simply the `m` smallest weights.
pub fn knapsack_min_size(t: &TransformedInput, lo: usize, hi: usize, m: usize, level: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if hi <= lo || m > hi - lo {
        return f64::INFINITY;
    }
    let mut w: Vec<f64> = (lo..hi).map(|p| t.w(p)).collect();
    w.sort_by(f64::total_cmp);
    level * w[..m].iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Back {
    None,
    Base,
    /// Same state with one fewer campaign.
    Inherit,
    /// Top campaign covers positions `prev..i` and satisfies `take` of them.
    Extend { prev: usize, take: usize },
}

/// Dynamic programming table: `value(j, i, m)` is the minimum expected
/// conversions of at most `j` campaigns whose highest level is
/// `beta_hat` at 1-based position `i`, satisfying exactly `m` of the first
/// `i` demographics. Position 0 stands for "no campaign yet".
#[derive(Debug, Clone)]
pub struct StepTable {
    k: usize,
    n: usize,
    beta_hat: Vec<f64>,
    value: Vec<f64>,
    back: Vec<Back>,
}

impl StepTable {
    #[allow(clippy::needless_range_loop)]
    pub fn build(t: &TransformedInput, k: usize, gamma: f64) -> StepTable {
        let n = t.len();
        let mut beta_hat = vec![0.0; n + 1];
        for i in 1..=n {
            beta_hat[i] = gamma * t.beta(i - 1);
        }
        let size = (k + 1) * (n + 1) * (n + 1);
        let mut table = StepTable {
            k,
            n,
            beta_hat,
            value: vec![f64::INFINITY; size],
            back: vec![Back::None; size],
        };
        for j in 0..=k {
            let at = table.idx(j, 0, 0);
            table.value[at] = 0.0;
            table.back[at] = Back::Base;
        }

        let mut sorted: Vec<f64> = Vec::with_capacity(n);
        let mut prefix: Vec<f64> = Vec::with_capacity(n + 1);
        for j in 1..=k {
            for i in 1..=n {
                for m in 0..=i {
                    let prev = table.value[table.idx(j - 1, i, m)];
                    if prev.is_finite() {
                        let at = table.idx(j, i, m);
                        table.value[at] = prev;
                        table.back[at] = Back::Inherit;
                    }
                }
                let level = table.beta_hat[i];
                sorted.clear();
                for l in (0..i).rev() {
                    // Range (l, i] in 1-based terms gains 0-based position l.
                    let w = t.w(l);
                    let at = sorted.partition_point(|&x| x <= w);
                    sorted.insert(at, w);
                    prefix.clear();
                    prefix.push(0.0);
                    let mut acc = 0.0;
                    for &x in &sorted {
                        acc += x;
                        prefix.push(acc);
                    }
                    for m_prev in 0..=l {
                        let base = table.value[table.idx(j - 1, l, m_prev)];
                        if !base.is_finite() {
                            continue;
                        }
                        for take in 0..=sorted.len() {
                            let cand = base + level * prefix[take];
                            let at = table.idx(j, i, m_prev + take);
                            if cand < table.value[at] - TIE_EPS {
                                table.value[at] = cand;
                                table.back[at] = Back::Extend { prev: l, take };
                            }
                        }
                    }
                }
            }
        }
        table
    }

    fn idx(&self, j: usize, i: usize, m: usize) -> usize {
        (j * (self.n + 1) + i) * (self.n + 1) + m
    }

    pub fn campaigns(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn value(&self, j: usize, i: usize, m: usize) -> f64 {
        self.value[self.idx(j, i, m)]
    }

    pub fn beta_hat(&self) -> &[f64] {
        &self.beta_hat[1..]
    }

    /// Largest satisfiable count within one expected conversion, with the
    /// top position and cost of the cheapest state achieving it.
    pub fn best(&self) -> (usize, usize, f64) {
        for m in (0..=self.n).rev() {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..=self.n {
                let v = self.value(self.k, i, m);
                if v <= 1.0 + FEASIBILITY_TOL && best.is_none_or(|(_, b)| v < b - TIE_EPS) {
                    best = Some((i, v));
                }
            }
            if let Some((i, v)) = best {
                return (m, i, v);
            }
        }
        (0, 0, 0.0)
    }

    fn extract(&self, t: &TransformedInput, mut i: usize, mut m: usize) -> LevelPlan {
        let mut j = self.k;
        let mut groups = Vec::new();
        loop {
            match self.back[self.idx(j, i, m)] {
                Back::Base | Back::None => break,
                Back::Inherit => j -= 1,
                Back::Extend { prev, take } => {
                    if take > 0 {
                        let mut range: Vec<usize> = (prev..i).collect();
                        range.sort_by(|&a, &b| t.w(a).total_cmp(&t.w(b)).then(a.cmp(&b)));
                        range.truncate(take);
                        groups.push(LevelGroup::new(range, self.beta_hat[i]));
                    }
                    j -= 1;
                    i = prev;
                    m -= take;
                }
            }
        }
        groups.reverse();
        LevelPlan::new(groups)
    }
}

/// Optimal step solution before rescaling.
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub satisfied: usize,
    /// Expected conversions of `levels`, at most one.
    pub conversions: f64,
    /// Campaign levels exactly at `gamma * beta` of some demographic.
    pub levels: LevelPlan,
}

/// Maximizes the number of demographics with `rho >= gamma` subject to at
/// most one expected conversion, before rescaling.
pub fn solve_step_levels(t: &TransformedInput, k: usize, gamma: f64) -> Result<StepSolution> {
    validate_gamma(gamma)?;
    let table = StepTable::build(t, k.min(t.len()).max(1), gamma);
    let (satisfied, top, conversions) = table.best();
    let levels = table.extract(t, top, satisfied);
    Ok(StepSolution {
        satisfied,
        conversions,
        levels,
    })
}

/// Exact gamma-step plan, rescaled to exactly one expected conversion.
pub fn solve_step(t: &TransformedInput, k: usize, gamma: f64) -> Result<Plan> {
    let solution = solve_step_levels(t, k, gamma)?;
    let levels = rescale_to_one(&solution.levels, t)?;
    let mut plan = Plan::from_levels(t, &levels, 0.0, Some(gamma));
    plan.objective_value = plan.metrics.satisfied_count as f64;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::{transform, ObjectiveSpec};

    fn i4() -> TransformedInput {
        transform(&instances::i4(2, ObjectiveSpec::Step { gamma: 1.0 })).unwrap()
    }

    #[test]
    fn knapsack_examples() {
        let t = i4();
        // Positions 0 and 1 are d4 and d3 (w = 0.8 each).
        assert!((knapsack_min_size(&t, 0, 2, 2, 0.25) - 0.4).abs() < 1e-12);
        assert_eq!(knapsack_min_size(&t, 1, 3, 0, 0.7), 0.0);
        // Position 2 is d2 (w = 0.6).
        assert!((knapsack_min_size(&t, 2, 3, 1, 0.5) - 0.3).abs() < 1e-12);
        assert_eq!(knapsack_min_size(&t, 2, 3, 2, 0.5), f64::INFINITY);
    }

    #[test]
    fn i4_gamma_one() {
        let t = i4();
        let s = solve_step_levels(&t, 2, 1.0).unwrap();
        assert_eq!(s.satisfied, 3);
        assert!((s.conversions - 0.7).abs() < 1e-12);
        let ids: Vec<Vec<&str>> = s
            .levels
            .groups
            .iter()
            .map(|g| g.members.iter().map(|&p| t.entry(p).id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["d4", "d3"], vec!["d2"]]);
        assert_eq!(s.levels.groups[0].level, 0.25);
        assert_eq!(s.levels.groups[1].level, 0.5);

        let plan = solve_step(&t, 2, 1.0).unwrap();
        assert_eq!(plan.objective_value, 3.0);
        assert!((plan.campaigns[0].level - 0.357142857).abs() < 1e-6);
        assert!((plan.campaigns[1].level - 0.714285714).abs() < 1e-6);
        plan.validate(&t).unwrap();
    }

    #[test]
    fn i4_quarter_gamma_satisfies_all() {
        let t = i4();
        let s = solve_step_levels(&t, 2, 0.25).unwrap();
        assert_eq!(s.satisfied, 4);
        assert!(s.conversions <= 1.0);
    }

    #[test]
    fn single_demographic() {
        let input = instances::single(0.05);
        let t = transform(&input).unwrap();
        for gamma in [0.3, 1.0] {
            let plan = solve_step(&t, 1, gamma).unwrap();
            assert_eq!(plan.objective_value, 1.0);
            assert!((plan.rho["only"] - 1.0).abs() < 1e-12);
            assert!((plan.metrics.cpv - 20.0).abs() < 1e-9);
        }
    }

    #[test]
    fn table_monotone_in_campaigns_and_count() {
        let t = transform(&instances::synthetic_twelve(3, ObjectiveSpec::Tvd)).unwrap();
        let table = StepTable::build(&t, 3, 0.8);
        for j in 1..=3 {
            for i in 0..=t.len() {
                for m in 0..=t.len() {
                    let v = table.value(j, i, m);
                    assert!(v >= 0.0);
                    assert!(v <= table.value(j - 1, i, m));
                    if m > 0 && i > 0 && v.is_finite() {
                        assert!(table.value(j, i, m - 1) <= v + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_gamma() {
        let t = i4();
        assert!(solve_step(&t, 2, 0.0).is_err());
        assert!(solve_step(&t, 2, 1.5).is_err());
    }
}
