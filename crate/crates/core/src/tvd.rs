//! Total-variation objective via weighted k-median on the line.
//!
//! Ignoring the one-conversion constraint, minimizing `sum_i w_i |Y - beta_i|`
//! is a weighted k-median problem on the points `beta_i` with an extra center
//! pinned at 0 (the unassigned demographics). Moving each cluster's center to
//! the weighted mean of its members restores exactly one expected conversion
//! and at most doubles each cluster's cost.

use std::ops::Range;

use crate::error::Result;
use crate::model::TransformedInput;
use crate::plan::{LevelGroup, LevelPlan, Plan};

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MedianBlock {
    /// Sorted positions served by this center.
    pub range: Range<usize>,
    pub center: f64,
    pub cost: f64,
}

/// Exact optimum of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianSolution {
    /// Positions served by the fixed center at 0 (always a prefix).
    pub zero_block: Range<usize>,
    pub zero_cost: f64,
    /// Free centers in ascending order, each with a contiguous block.
    pub blocks: Vec<MedianBlock>,
    pub cost: f64,
}

impl MedianSolution {
    pub fn centers(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.blocks.iter().map(|b| b.center))
            .collect()
    }
}

/// Lower weighted median of positions `range` and the cost around it.
fn median_block(t: &TransformedInput, range: Range<usize>) -> MedianBlock {
    let total: f64 = range.clone().map(|p| t.w(p)).sum();
    let half = 0.5 * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut center = t.beta(range.end - 1);
    for p in range.clone() {
        acc += t.w(p);
        if acc >= half {
            center = t.beta(p);
            break;
        }
    }
    let cost = range.clone().map(|p| t.w(p) * (t.beta(p) - center).abs()).sum();
    MedianBlock {
        range,
        center,
        cost,
    }
}

/// Exact weighted k-median with an extra center fixed at 0, by dynamic
/// programming over contiguous blocks of the sorted points.
///
/// Equal-cost solutions are resolved by preferring the larger zero block,
/// then fewer free centers, then the lexicographically smallest cut positions.
pub fn kmedian_line(t: &TransformedInput, k: usize) -> MedianSolution {
    let n = t.len();
    let k = k.max(1);

    let mut blocks: Vec<Vec<Option<MedianBlock>>> = vec![vec![None; n + 1]; n + 1];
    for (a, row) in blocks.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate().skip(a + 1) {
            *slot = Some(median_block(t, a..b));
        }
    }
    let block_cost = |a: usize, b: usize| blocks[a][b].as_ref().map_or(0.0, |m| m.cost);

    // suffix[j][a]: cost of covering a..n with exactly j blocks; cut[j][a] is
    // the end of the first block.
    let mut suffix = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut cut = vec![vec![usize::MAX; n + 1]; k + 1];
    suffix[0][n] = 0.0;
    for j in 1..=k {
        for a in (0..n).rev() {
            for b in a + 1..=n {
                let rest = suffix[j - 1][b];
                if !rest.is_finite() {
                    continue;
                }
                let cand = block_cost(a, b) + rest;
                if cand < suffix[j][a] - TIE_EPS {
                    suffix[j][a] = cand;
                    cut[j][a] = b;
                }
            }
        }
    }

    let mut zero_cost = vec![0.0; n + 1];
    for p in 0..n {
        zero_cost[p + 1] = zero_cost[p] + t.w(p) * t.beta(p);
    }

    let mut best: Option<(f64, usize, usize)> = None;
    for p in (0..=n).rev() {
        let options: Vec<usize> = if p == n { vec![0] } else { (1..=k).collect() };
        for j in options {
            let free = suffix[j][p];
            if !free.is_finite() {
                continue;
            }
            let cand = zero_cost[p] + free;
            if best.is_none_or(|(c, _, _)| cand < c - TIE_EPS) {
                best = Some((cand, p, j));
            }
        }
    }
    let (cost, p, j) = best.expect("the all-zero assignment is always available");

    let mut out = Vec::with_capacity(j);
    let mut a = p;
    for jj in (1..=j).rev() {
        let b = cut[jj][a];
        out.push(blocks[a][b].clone().expect("cut within range"));
        a = b;
    }
    MedianSolution {
        zero_block: 0..p,
        zero_cost: zero_cost[p],
        blocks: out,
        cost,
    }
}

/// One cluster before and after recentering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub range: Range<usize>,
    /// 0 for the pinned cluster.
    pub relaxed_center: f64,
    pub relaxed_cost: f64,
    /// Weighted mean of member `beta`.
    pub level: f64,
    pub cost: f64,
    /// Imbalance between weighted distances below and above `level`.
    pub balance_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TvdSolution {
    pub median: MedianSolution,
    pub clusters: Vec<ClusterReport>,
    pub levels: LevelPlan,
    pub plan: Plan,
}

/// Weighted-mean level of a block: the unique `y` with
/// `sum_{beta <= y} w (y - beta) = sum_{beta >= y} w (beta - y)`.
pub fn balance_level(t: &TransformedInput, range: Range<usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in range {
        num += t.w(p) * t.beta(p);
        den += t.w(p);
    }
    num / den
}

pub fn balance_residual(t: &TransformedInput, range: Range<usize>, y: f64) -> f64 {
    let (mut below, mut above) = (0.0, 0.0);
    for p in range {
        let beta = t.beta(p);
        if beta <= y {
            below += t.w(p) * (y - beta);
        }
        if beta >= y {
            above += t.w(p) * (beta - y);
        }
    }
    (below - above).abs()
}

/// Moves every nonempty cluster, including the pinned one, to its balance
/// level. The result has exactly one expected conversion and at most `k + 1`
/// campaigns.
pub fn recenter(t: &TransformedInput, solution: &MedianSolution) -> TvdSolution {
    let mut clusters = Vec::new();
    let pinned = (!solution.zero_block.is_empty()).then(|| {
        (
            solution.zero_block.clone(),
            0.0,
            solution.zero_cost,
        )
    });
    let free = solution
        .blocks
        .iter()
        .map(|b| (b.range.clone(), b.center, b.cost));
    for (range, relaxed_center, relaxed_cost) in pinned.into_iter().chain(free) {
        if range.is_empty() {
            continue;
        }
        let level = balance_level(t, range.clone());
        let cost = range
            .clone()
            .map(|p| t.w(p) * (level - t.beta(p)).abs())
            .sum();
        clusters.push(ClusterReport {
            balance_residual: balance_residual(t, range.clone(), level),
            range,
            relaxed_center,
            relaxed_cost,
            level,
            cost,
        });
    }
    let levels = LevelPlan::new(
        clusters
            .iter()
            .map(|c| LevelGroup::new(c.range.clone().collect(), c.level))
            .collect(),
    );
    let tvd: f64 = clusters.iter().map(|c| c.cost).sum();
    let plan = Plan::from_levels(t, &levels, tvd, None);
    TvdSolution {
        median: solution.clone(),
        clusters,
        levels,
        plan,
    }
}

pub fn solve_tvd_detailed(t: &TransformedInput, k: usize) -> TvdSolution {
    recenter(t, &kmedian_line(t, k))
}

pub fn solve_tvd(t: &TransformedInput, k: usize) -> Result<Plan> {
    Ok(solve_tvd_detailed(t, k).plan)
}
