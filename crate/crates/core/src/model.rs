//! Domain types and the change of variables that linearizes the planning problem.
//!
//! Every demographic `i` is described by its population share `alpha`, its
//! spend-proportionality weight `q` and its single-target conversion rate `phi`.
//! Solvers never look at those directly; they consume the transformed pair
//! `w = q * phi` and `beta = alpha / w`, under which a campaign with level `Y`
//! yields `Y * w_i` conversions from member `i` and a representation ratio
//! `rho_i = Y / beta_i`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};

/// Tolerance on `sum(alpha) == 1`.
pub const ALPHA_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographic {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub alpha: f64,
    pub q: f64,
    pub phi: f64,
}

impl Demographic {
    pub fn new(id: impl Into<String>, alpha: f64, q: f64, phi: f64) -> Self {
        Demographic {
            id: id.into(),
            label: String::new(),
            alpha,
            q,
            phi,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn validate(&self) -> Result<()> {
        let checks = [("alpha", self.alpha), ("q", self.q), ("phi", self.phi)];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(PlannerError::InvalidDemographic {
                    id: self.id.clone(),
                    reason: format!("{name} must be a positive finite number (got {value})"),
                });
            }
        }
        if self.alpha > 1.0 {
            return Err(PlannerError::InvalidDemographic {
                id: self.id.clone(),
                reason: format!("alpha must lie in (0, 1] (got {})", self.alpha),
            });
        }
        Ok(())
    }
}

/// Which parity objective a plan optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    /// Count demographics whose conversion share reaches `gamma * alpha`.
    Step { gamma: f64 },
    /// Sum of `min(1, rho / gamma)`.
    MonotoneLinear { gamma: f64 },
    /// Minimize `sum alpha_i |1 - rho_i|`.
    Tvd,
}

impl ObjectiveSpec {
    pub fn gamma(&self) -> Option<f64> {
        match *self {
            ObjectiveSpec::Step { gamma } | ObjectiveSpec::MonotoneLinear { gamma } => Some(gamma),
            ObjectiveSpec::Tvd => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveSpec::Step { .. } => "step",
            ObjectiveSpec::MonotoneLinear { .. } => "monotone-linear",
            ObjectiveSpec::Tvd => "tvd",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(gamma) = self.gamma() {
            validate_gamma(gamma)?;
        }
        Ok(())
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gamma() {
            Some(gamma) => write!(f, "{}(gamma={gamma})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

pub(crate) fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(PlannerError::InvalidInput(format!(
            "gamma must lie in (0, 1] (got {gamma})"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInput {
    pub demographics: Vec<Demographic>,
    /// Maximum number of campaigns.
    pub k: usize,
    /// Daily budget in dollars.
    pub budget: f64,
    pub objective: ObjectiveSpec,
}

impl PlanInput {
    pub fn new(
        demographics: Vec<Demographic>,
        k: usize,
        budget: f64,
        objective: ObjectiveSpec,
    ) -> Self {
        PlanInput {
            demographics,
            k,
            budget,
            objective,
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_objective(mut self, objective: ObjectiveSpec) -> Self {
        self.objective = objective;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_demographics(&self.demographics)?;
        if self.k == 0 || self.k > self.demographics.len() {
            return Err(PlannerError::InvalidInput(format!(
                "k must lie in [1, {}] (got {})",
                self.demographics.len(),
                self.k
            )));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(PlannerError::InvalidInput(format!(
                "daily budget must be positive (got {})",
                self.budget
            )));
        }
        self.objective.validate()
    }

    pub fn total_q(&self) -> f64 {
        self.demographics.iter().map(|d| d.q).sum()
    }
}

/// Checks positivity, id uniqueness and `sum(alpha) == 1`.
pub fn validate_demographics(demographics: &[Demographic]) -> Result<()> {
    if demographics.is_empty() {
        return Err(PlannerError::InvalidInput("no demographics".into()));
    }
    let mut seen = BTreeSet::new();
    let mut duplicates = BTreeSet::new();
    for d in demographics {
        if !seen.insert(d.id.as_str()) {
            duplicates.insert(d.id.clone());
        }
    }
    if !duplicates.is_empty() {
        return Err(PlannerError::DuplicateIds(duplicates.into_iter().collect()));
    }
    for d in demographics {
        d.validate()?;
    }
    let sum: f64 = demographics.iter().map(|d| d.alpha).sum();
    if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
        return Err(PlannerError::Normalization {
            sum,
            tolerance: ALPHA_SUM_TOLERANCE,
        });
    }
    Ok(())
}

/// Rescales population shares to sum to one. Only used when explicitly requested.
pub fn renormalize_alpha(demographics: &mut [Demographic]) -> Result<()> {
    let sum: f64 = demographics.iter().map(|d| d.alpha).sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(PlannerError::Normalization {
            sum,
            tolerance: ALPHA_SUM_TOLERANCE,
        });
    }
    for d in demographics.iter_mut() {
        d.alpha /= sum;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedEntry {
    pub id: String,
    pub w: f64,
    pub beta: f64,
    pub alpha: f64,
    pub q: f64,
    pub phi: f64,
}

/// Demographics in `(w, beta)` form, sorted by `beta` ascending with the id as
/// tie-break. Solvers address demographics by their position in this order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedInput {
    entries: Vec<TransformedEntry>,
}

impl TransformedInput {
    pub fn entries(&self) -> &[TransformedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, pos: usize) -> &TransformedEntry {
        &self.entries[pos]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn w(&self, pos: usize) -> f64 {
        self.entries[pos].w
    }

    pub fn beta(&self, pos: usize) -> f64 {
        self.entries[pos].beta
    }

    pub fn total_q(&self) -> f64 {
        self.entries.iter().map(|e| e.q).sum()
    }

    /// `sum_i w_i * beta_i`, which equals `sum_i alpha_i`.
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.w * e.beta).sum()
    }
}

/// Applies `w = q * phi`, `beta = alpha / w` and sorts by `beta`.
pub fn transform(input: &PlanInput) -> Result<TransformedInput> {
    input.validate()?;
    transform_demographics(&input.demographics)
}

/// Same as [`transform`] without the `k`/budget/objective checks.
pub fn transform_demographics(demographics: &[Demographic]) -> Result<TransformedInput> {
    validate_demographics(demographics)?;
    let mut entries: Vec<TransformedEntry> = demographics
        .iter()
        .map(|d| {
            let w = d.q * d.phi;
            TransformedEntry {
                id: d.id.clone(),
                w,
                beta: d.alpha / w,
                alpha: d.alpha,
                q: d.q,
                phi: d.phi,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.beta.total_cmp(&b.beta).then_with(|| a.id.cmp(&b.id)));
    Ok(TransformedInput { entries })
}

/// Expected conversions per dollar for a demographic inside a campaign whose
/// members' spend weights sum to `campaign_q_sum`.
pub fn conversion_rate(demographic: &Demographic, campaign_q_sum: f64) -> Result<f64> {
    if !(campaign_q_sum.is_finite() && campaign_q_sum > 0.0) {
        return Err(PlannerError::Domain(format!(
            "campaign q sum must be positive (got {campaign_q_sum})"
        )));
    }
    Ok(demographic.phi * demographic.q / campaign_q_sum)
}
