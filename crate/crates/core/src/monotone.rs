//! Factor-two approximation for monotone parity objectives.
//!
//! Given levels `Y_1 <= ... <= Y_k`, each demographic is either unassigned,
//! placed in a campaign whose level saturates it, or placed in a campaign
//! whose level lies below its own `beta`. Restricting every demographic to
//! the first two options, or to the first and third, yields two problems that
//! can each be solved exactly; the better of the two is within half of the
//! optimum.

use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::model::{validate_gamma, TransformedInput};
use crate::plan::{rescale_to_one, satisfies, LevelGroup, LevelPlan, Plan};
use crate::step::solve_step_levels;

/// Grid used to check that a function is a valid monotone objective.
const CHECK_GRID: usize = 2000;

/// A non-decreasing objective with `f(0) = 0` and `f(rho) = 1` for `rho >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MonotoneFunction {
    Step { gamma: f64 },
    /// `min(1, rho / gamma)`.
    LinearCap { gamma: f64 },
    /// Piecewise-linear interpolation through `(rho, value)` points; constant
    /// after the last point.
    Custom { points: Vec<(f64, f64)> },
}

impl MonotoneFunction {
    pub fn step(gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(MonotoneFunction::Step { gamma })
    }

    pub fn linear_cap(gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(MonotoneFunction::LinearCap { gamma })
    }

    pub fn custom(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let f = MonotoneFunction::Custom { points };
        f.validate()?;
        Ok(f)
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            MonotoneFunction::Step { gamma } => {
                if satisfies(rho, *gamma) {
                    1.0
                } else {
                    0.0
                }
            }
            MonotoneFunction::LinearCap { gamma } => {
                if satisfies(rho, *gamma) {
                    1.0
                } else {
                    (rho / gamma).max(0.0)
                }
            }
            MonotoneFunction::Custom { points } => interpolate(points, rho),
        }
    }

    /// Smallest `rho` at which the function reaches 1.
    pub fn saturation(&self) -> f64 {
        match self {
            MonotoneFunction::Step { gamma } | MonotoneFunction::LinearCap { gamma } => *gamma,
            MonotoneFunction::Custom { points } => points
                .iter()
                .find(|p| p.1 >= 1.0)
                .map_or(1.0, |p| p.0.clamp(f64::MIN_POSITIVE, 1.0)),
        }
    }

    /// Checks `f(0) = 0`, `f = 1` on `[1, 2]` and monotonicity on a fixed grid.
    pub fn validate(&self) -> Result<()> {
        match self {
            MonotoneFunction::Step { gamma } | MonotoneFunction::LinearCap { gamma } => {
                return validate_gamma(*gamma);
            }
            MonotoneFunction::Custom { points } => {
                if points.is_empty() || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite())
                {
                    return Err(PlannerError::InvalidInput(
                        "custom objective needs finite (rho, value) points".into(),
                    ));
                }
            }
        }
        let bad = |msg: String| Err(PlannerError::InvalidInput(msg));
        if self.eval(0.0) != 0.0 {
            return bad(format!("f(0) = {}, expected 0", self.eval(0.0)));
        }
        let mut prev = 0.0;
        for s in 0..=CHECK_GRID {
            let rho = 2.0 * s as f64 / CHECK_GRID as f64;
            let v = self.eval(rho);
            if v < prev - 1e-12 {
                return bad(format!("objective decreases at rho = {rho}"));
            }
            if rho >= 1.0 && (v - 1.0).abs() > 1e-12 {
                return bad(format!("f({rho}) = {v}, expected 1 for rho >= 1"));
            }
            if !(0.0..=1.0 + 1e-12).contains(&v) {
                return bad(format!("f({rho}) = {v} outside [0, 1]"));
            }
            prev = v;
        }
        Ok(())
    }

    /// `min(1, rho / gamma)` is the only concave member handled by the oracle.
    pub fn linear_gamma(&self) -> Option<f64> {
        match self {
            MonotoneFunction::LinearCap { gamma } => Some(*gamma),
            _ => None,
        }
    }
}

fn interpolate(points: &[(f64, f64)], rho: f64) -> f64 {
    let first = points[0];
    if rho <= first.0 {
        return if rho < first.0 { 0.0 } else { first.1 };
    }
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if rho <= b.0 {
            if b.0 == a.0 {
                return b.1;
            }
            return a.1 + (b.1 - a.1) * (rho - a.0) / (b.0 - a.0);
        }
    }
    points[points.len() - 1].1
}

/// Sum of `f(rho_i)` over a level assignment (unassigned contribute `f(0) = 0`).
pub fn evaluate(levels: &LevelPlan, t: &TransformedInput, f: &MonotoneFunction) -> f64 {
    levels
        .groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |&p| f.eval(g.level / t.beta(p))))
        .sum()
}

#[derive(Debug, Clone)]
pub struct CaseSolution {
    /// Optimum of the restricted problem, before rescaling.
    pub restricted_value: f64,
    /// Levels before rescaling; conversions are at most one.
    pub levels: LevelPlan,
    /// Rescaled plan, valued with `f` on its final `rho`.
    pub plan: Plan,
}

fn finish(
    t: &TransformedInput,
    f: &MonotoneFunction,
    levels: LevelPlan,
    restricted_value: f64,
) -> Result<CaseSolution> {
    let scaled = rescale_to_one(&levels, t)?;
    let value = evaluate(&scaled, t, f);
    let plan = Plan::from_levels(t, &scaled, value, Some(f.saturation()));
    Ok(CaseSolution {
        restricted_value,
        levels,
        plan,
    })
}

/// Every assigned demographic sits in the lowest campaign that saturates it.
/// This is the step problem at the saturation point of `f`.
pub fn solve_case2(t: &TransformedInput, k: usize, f: &MonotoneFunction) -> Result<CaseSolution> {
    f.validate()?;
    let step = solve_step_levels(t, k, f.saturation())?;
    let value = evaluate(&step.levels, t, f);
    finish(t, f, step.levels, value)
}

/// Every assigned demographic sits in the highest campaign whose level does
/// not exceed its own `beta`; the conversion budget then holds automatically.
#[allow(clippy::needless_range_loop)]
pub fn solve_case3(t: &TransformedInput, k: usize, f: &MonotoneFunction) -> Result<CaseSolution> {
    f.validate()?;
    let n = t.len();
    let k = k.clamp(1, n.max(1));

    // seg[l][i]: value of positions l..i served by a center at beta_l.
    let mut seg = vec![vec![0.0; n + 1]; n];
    for l in 0..n {
        let center = t.beta(l);
        let mut acc = 0.0;
        for q in l..n {
            acc += f.eval(center / t.beta(q));
            seg[l][q + 1] = acc;
        }
    }

    // best[j][i]: value of positions below i using at most j centers, the
    // highest of which sits at position i.
    let mut best = vec![vec![0.0; n]; k + 1];
    let mut prev: Vec<Vec<Option<usize>>> = vec![vec![None; n]; k + 1];
    for j in 2..=k {
        for i in 0..n {
            let mut value = 0.0;
            let mut arg = None;
            for l in 0..i {
                let cand = best[j - 1][l] + seg[l][i];
                if cand > value + 1e-12 {
                    value = cand;
                    arg = Some(l);
                }
            }
            best[j][i] = value;
            prev[j][i] = arg;
        }
    }

    let mut top = 0;
    let mut value = f64::NEG_INFINITY;
    for i in 0..n {
        let cand = best[k][i] + seg[i][n];
        if cand > value + 1e-12 {
            value = cand;
            top = i;
        }
    }

    let mut centers = vec![top];
    let mut j = k;
    let mut i = top;
    while j >= 2 {
        let Some(l) = prev[j][i] else { break };
        centers.push(l);
        i = l;
        j -= 1;
    }
    centers.reverse();
    let mut groups = Vec::with_capacity(centers.len());
    for (c, &start) in centers.iter().enumerate() {
        let end = centers.get(c + 1).copied().unwrap_or(n);
        groups.push(LevelGroup::new((start..end).collect(), t.beta(start)));
    }
    let levels = LevelPlan::new(groups);
    let restricted = evaluate(&levels, t, f);
    finish(t, f, levels, restricted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Saturating,
    BelowBeta,
}

#[derive(Debug, Clone)]
pub struct MonotoneOutcome {
    pub case2: CaseSolution,
    pub case3: CaseSolution,
    pub chosen: Case,
}

impl MonotoneOutcome {
    pub fn chosen(&self) -> &CaseSolution {
        match self.chosen {
            Case::Saturating => &self.case2,
            Case::BelowBeta => &self.case3,
        }
    }

    pub fn into_plan(self) -> Plan {
        match self.chosen {
            Case::Saturating => self.case2.plan,
            Case::BelowBeta => self.case3.plan,
        }
    }
}

/// Solves both restricted problems and keeps the one with the larger
/// restricted optimum (ties go to the saturating case).
pub fn solve_monotone_cases(
    t: &TransformedInput,
    k: usize,
    f: &MonotoneFunction,
) -> Result<MonotoneOutcome> {
    let (case2, case3) = rayon::join(|| solve_case2(t, k, f), || solve_case3(t, k, f));
    let (case2, case3) = (case2?, case3?);
    let chosen = if case3.restricted_value > case2.restricted_value + 1e-12 {
        Case::BelowBeta
    } else {
        Case::Saturating
    };
    Ok(MonotoneOutcome {
        case2,
        case3,
        chosen,
    })
}

pub fn solve_monotone(t: &TransformedInput, k: usize, f: &MonotoneFunction) -> Result<Plan> {
    Ok(solve_monotone_cases(t, k, f)?.into_plan())
}
