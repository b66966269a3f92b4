//! Recovering the hidden spend weights `q` and conversion rates `phi`.
//!
//! A pacing platform reveals `sum_{i in S_j} q_i` for every campaign. Running
//! differently split campaigns on different days yields a linear system in
//! `q`; observed conversions per campaign dollar then give `phi` by inverting
//! the proportional-spend model.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::sim::{CampaignSpec, SpendRecord};

const RANK_TOL: f64 = 1e-9;
const SVD_TOL: f64 = 1e-10;

/// Days of campaign splits. `days[d][g]` lists the positions (into `ids`) of
/// the demographics in group `g` on day `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSchedule {
    pub ids: Vec<String>,
    pub k: usize,
    pub days: Vec<Vec<Vec<usize>>>,
    /// Scaling factors revealed per day and group, once observed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revealed: Option<Vec<Vec<f64>>>,
}

impl RotationSchedule {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.ids.len() {
            return Err(PlannerError::InvalidInput(format!(
                "schedule covers {} demographics, got {} ids",
                self.ids.len(),
                ids.len()
            )));
        }
        self.ids = ids;
        Ok(self)
    }

    /// Group-membership indicator rows, one per nonempty group.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let rows: Vec<&Vec<usize>> = self.days.iter().flatten().filter(|g| !g.is_empty()).collect();
        let mut a = DMatrix::zeros(rows.len(), self.n());
        for (r, g) in rows.iter().enumerate() {
            for &p in g.iter() {
                a[(r, p)] = 1.0;
            }
        }
        a
    }

    /// Scaling factors the platform would reveal under weights `q`.
    pub fn reveal(&self, q: &[f64]) -> Vec<Vec<f64>> {
        self.days
            .iter()
            .map(|day| day.iter().map(|g| g.iter().map(|&p| q[p]).sum()).collect())
            .collect()
    }

    /// Campaigns for day `day` (cycling through the schedule), the daily
    /// budget split evenly over the nonempty groups.
    pub fn campaigns(&self, day: usize, budget: f64) -> Vec<CampaignSpec> {
        let groups = &self.days[day % self.days.len()];
        let live = groups.iter().filter(|g| !g.is_empty()).count().max(1);
        groups
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .map(|(g, members)| {
                CampaignSpec::new(
                    format!("g{}", g + 1),
                    members.iter().map(|&p| self.ids[p].clone()).collect(),
                    budget / live as f64,
                )
            })
            .collect()
    }
}

/// Incremental row-echelon basis for rank tracking.
#[derive(Debug, Default)]
struct RankTracker {
    basis: Vec<(usize, Vec<f64>)>,
}

impl RankTracker {
    fn rank(&self) -> usize {
        self.basis.len()
    }

    fn add(&mut self, row: &[f64]) -> bool {
        let mut r = row.to_vec();
        for (pivot, b) in &self.basis {
            let f = r[*pivot];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(b) {
                    *x -= f * y;
                }
            }
        }
        let Some((pivot, &v)) = r
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        else {
            return false;
        };
        if v.abs() <= RANK_TOL {
            return false;
        }
        for x in &mut r {
            *x /= v;
        }
        for (_, b) in &mut self.basis {
            let f = b[pivot];
            if f != 0.0 {
                for (x, y) in b.iter_mut().zip(&r) {
                    *x -= f * y;
                }
            }
        }
        self.basis.push((pivot, r));
        true
    }

    fn add_day(&mut self, n: usize, day: &[Vec<usize>]) -> usize {
        let before = self.rank();
        for g in day {
            let mut row = vec![0.0; n];
            for &p in g {
                row[p] = 1.0;
            }
            self.add(&row);
        }
        self.rank() - before
    }
}

/// Contiguous blocks of `ceil(n / k)`.
fn block_day(n: usize, k: usize) -> Vec<Vec<usize>> {
    let size = n.div_ceil(k);
    (0..k)
        .map(|g| (g * size..((g + 1) * size).min(n)).collect())
        .filter(|g: &Vec<usize>| !g.is_empty())
        .collect()
}

/// Positions laid out row-major on a grid with `k` columns; group of `(r, c)`
/// is `(c + shift * r) mod k`.
fn grid_day(n: usize, k: usize, shift: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); k];
    for p in 0..n {
        let (r, c) = (p / k, p % k);
        groups[(c + shift * r) % k].push(p);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Visits balanced partitions of `0..n` into exactly `k` groups as
/// restricted-growth strings in lexicographic order.
fn for_each_balanced(
    n: usize,
    k: usize,
    visit: &mut dyn FnMut(&[usize]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    fn go(
        labels: &mut Vec<usize>,
        sizes: &mut Vec<usize>,
        n: usize,
        k: usize,
        cap: usize,
        visit: &mut dyn FnMut(&[usize]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let p = labels.len();
        if p == n {
            let floor = n / k;
            if sizes.len() == k && sizes.iter().all(|&s| s >= floor) {
                return visit(labels);
            }
            return ControlFlow::Continue(());
        }
        if k - sizes.len().min(k) > n - p {
            return ControlFlow::Continue(());
        }
        let open = sizes.len();
        for g in 0..=open.min(k - 1) {
            if g == open {
                sizes.push(0);
            }
            if sizes[g] < cap {
                sizes[g] += 1;
                labels.push(g);
                let flow = go(labels, sizes, n, k, cap, visit);
                labels.pop();
                sizes[g] -= 1;
                if flow.is_break() {
                    if g == open {
                        sizes.pop();
                    }
                    return flow;
                }
            }
            if g == open {
                sizes.pop();
            }
        }
        ControlFlow::Continue(())
    }
    go(&mut Vec::with_capacity(n), &mut Vec::new(), n, k, n.div_ceil(k), visit)
}

/// A schedule of daily splits whose design matrix has full column rank.
///
/// The first `ceil(n / k)` days are structured: contiguous blocks, then
/// rotations on a `k`-column grid. Since each day's rows sum to the all-ones
/// vector, `d` days give rank at most `1 + d (k - 1)`, so these rarely
/// suffice; further balanced splits are appended, in lexicographic order,
/// whenever they raise the rank.
pub fn design_rotation_splits(n: usize, k: usize) -> Result<RotationSchedule> {
    if n == 0 || k == 0 || k > n {
        return Err(PlannerError::InvalidInput(format!(
            "need 1 <= k <= n, got n = {n}, k = {k}"
        )));
    }
    if k == 1 && n > 1 {
        return Err(PlannerError::Refused {
            what: "rotation design".into(),
            reason: format!(
                "with one campaign every day reveals only the total of all {n} weights"
            ),
        });
    }
    let mut tracker = RankTracker::default();
    let mut days = vec![block_day(n, k)];
    for shift in 0..n.div_ceil(k).saturating_sub(1) {
        days.push(grid_day(n, k, shift));
    }
    for day in &days {
        tracker.add_day(n, day);
    }
    if tracker.rank() < n {
        let _ = for_each_balanced(n, k, &mut |labels| {
            let mut day = vec![Vec::new(); k];
            for (p, &g) in labels.iter().enumerate() {
                day[g].push(p);
            }
            if tracker.add_day(n, &day) > 0 {
                days.push(day);
            }
            if tracker.rank() == n {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
    }
    if tracker.rank() < n {
        return Err(PlannerError::RankDeficient {
            rank: tracker.rank(),
            needed: n,
            directions: "no balanced split raises the rank further".into(),
        });
    }
    Ok(RotationSchedule {
        ids: (1..=n).map(|i| i.to_string()).collect(),
        k,
        days,
        revealed: None,
    })
}

/// Numerical rank by singular values above `1e-10` times the largest.
pub fn svd_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let svd = a.clone().svd(false, false);
    let top = svd.singular_values.max();
    svd.singular_values.iter().filter(|&&s| s > SVD_TOL * top).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QEstimate {
    pub ids: Vec<String>,
    pub q: Vec<f64>,
    /// Euclidean norm of `A q - revealed`.
    pub residual_norm: f64,
}

impl QEstimate {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        self.ids.iter().cloned().zip(self.q.iter().copied()).collect()
    }
}

fn describe_null_space(a: &DMatrix<f64>, ids: &[String]) -> (usize, String) {
    let n = a.ncols();
    let mut padded = DMatrix::zeros(a.nrows().max(n), n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let top = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let mut rank = 0;
    let mut directions = Vec::new();
    for (s, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > SVD_TOL * top {
            rank += 1;
            continue;
        }
        let terms: Vec<String> = (0..n)
            .filter(|&c| v_t[(s, c)].abs() > 1e-6)
            .map(|c| format!("{:+.3}*{}", v_t[(s, c)], ids[c]))
            .collect();
        directions.push(format!("[{}]", terms.join(" ")));
    }
    (rank, directions.join(", "))
}

/// Least-squares `q` from revealed per-day, per-group scaling factors
/// (`revealed[d][g]` matches `schedule.days[d][g]`).
pub fn infer_q(schedule: &RotationSchedule, revealed: &[Vec<f64>]) -> Result<QEstimate> {
    if revealed.len() != schedule.days.len() {
        return Err(PlannerError::InvalidInput(format!(
            "{} days of revealed values for a {}-day schedule",
            revealed.len(),
            schedule.days.len()
        )));
    }
    let mut y = Vec::new();
    for (d, (day, values)) in schedule.days.iter().zip(revealed).enumerate() {
        if day.len() != values.len() {
            return Err(PlannerError::InvalidInput(format!(
                "day {} has {} groups but {} revealed values",
                d + 1,
                day.len(),
                values.len()
            )));
        }
        y.extend(
            day.iter()
                .zip(values)
                .filter(|(g, _)| !g.is_empty())
                .map(|(_, &v)| v),
        );
    }
    let a = schedule.design_matrix();
    let n = schedule.n();
    let (rank, directions) = describe_null_space(&a, &schedule.ids);
    if rank < n {
        return Err(PlannerError::RankDeficient {
            rank,
            needed: n,
            directions,
        });
    }
    let y = DVector::from_vec(y);
    let svd = a.clone().svd(true, true);
    let q = svd
        .solve(&y, SVD_TOL * svd.singular_values.max())
        .map_err(|e| PlannerError::Domain(e.to_string()))?;
    let residual_norm = (&a * &q - &y).norm();
    Ok(QEstimate {
        ids: schedule.ids.clone(),
        q: q.iter().copied().collect(),
        residual_norm,
    })
}

/// `phi_i = eta * q_sum / q_i`, the inverse of the per-dollar conversion rate
/// of a demographic inside a campaign.
pub fn invert_conversion_rate(eta: f64, q: f64, q_sum: f64) -> Result<f64> {
    if !(q > 0.0 && q_sum >= q) {
        return Err(PlannerError::Domain(format!(
            "need 0 < q <= q_sum, got q = {q}, q_sum = {q_sum}"
        )));
    }
    Ok(eta * q_sum / q)
}

/// Conversion rates from observed conversions per campaign dollar.
///
/// For each day and campaign, `eta_i = conversions_i / campaign spend` is
/// inverted with the estimated weights, and estimates from several cells are
/// averaged with weights equal to the spend the model attributes to `i`.
/// A demographic with zero conversions gets `1 / spend`; one never spent on
/// keeps its `prior` value.
pub fn infer_phi(
    records: &[SpendRecord],
    q_hat: &BTreeMap<String, f64>,
    prior: Option<&BTreeMap<String, f64>>,
) -> Result<BTreeMap<String, f64>> {
    let mut cells: BTreeMap<(u32, &str), Vec<&SpendRecord>> = BTreeMap::new();
    for r in records {
        if !(r.spend >= 0.0 && r.conversions >= 0.0) {
            return Err(PlannerError::InvalidInput(format!(
                "negative spend or conversions for {} on day {}",
                r.demographic_id, r.day
            )));
        }
        cells.entry((r.day, r.campaign_id.as_str())).or_default().push(r);
    }
    let mut seen_on_day: BTreeSet<(u32, &str)> = BTreeSet::new();
    // (weighted phi sum, attributed spend, conversions)
    let mut acc: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for ((day, campaign), rows) in &cells {
        let spend: f64 = rows.iter().map(|r| r.spend).sum();
        let mut q_sum = 0.0;
        for r in rows {
            if !seen_on_day.insert((*day, r.demographic_id.as_str())) {
                return Err(PlannerError::InvalidInput(format!(
                    "{} observed in more than one campaign on day {day}",
                    r.demographic_id
                )));
            }
            q_sum += q_hat.get(&r.demographic_id).copied().ok_or_else(|| {
                PlannerError::InvalidInput(format!("no q estimate for {}", r.demographic_id))
            })?;
        }
        if spend <= 0.0 {
            continue;
        }
        for r in rows {
            let q = q_hat[&r.demographic_id];
            let eta = r.conversions / spend;
            let phi = invert_conversion_rate(eta, q, q_sum).map_err(|e| {
                PlannerError::InvalidInput(format!("campaign {campaign} day {day}: {e}"))
            })?;
            let attributed = spend * q / q_sum;
            let slot = acc.entry(r.demographic_id.as_str()).or_default();
            slot.0 += phi * attributed;
            slot.1 += attributed;
            slot.2 += r.conversions;
        }
    }

    let mut ids: BTreeSet<&str> = q_hat.keys().map(String::as_str).collect();
    if let Some(p) = prior {
        ids.extend(p.keys().map(String::as_str));
    }
    let mut out = BTreeMap::new();
    for id in ids {
        let estimate = match acc.get(id) {
            Some(&(weighted, attributed, conversions)) if attributed > 0.0 => {
                if conversions > 0.0 {
                    weighted / attributed
                } else {
                    1.0 / attributed
                }
            }
            _ => match prior.and_then(|p| p.get(id)) {
                Some(&phi) => phi,
                None => {
                    return Err(PlannerError::InvalidInput(format!(
                        "no spend observed on {id} and no prior estimate"
                    )))
                }
            },
        };
        out.insert(id.to_string(), estimate);
    }
    Ok(out)
}
