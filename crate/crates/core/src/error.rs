use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid demographic '{id}': {reason}")]
    InvalidDemographic { id: String, reason: String },
    #[error("population shares sum to {sum} (expected 1 within {tolerance:e})")]
    Normalization { sum: f64, tolerance: f64 },
    #[error("duplicate demographic ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate plan: {0}")]
    DegeneratePlan(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{what} refused: {reason}")]
    Refused { what: String, reason: String },
    #[error("rank deficient design ({rank} of {needed}); unidentifiable directions: {directions}")]
    RankDeficient {
        rank: usize,
        needed: usize,
        directions: String,
    },
    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PlannerError {
    /// Solver refusals (size limits, impossible designs) are distinguished from
    /// input validation failures by the command line front end.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            PlannerError::Refused { .. } | PlannerError::RankDeficient { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PlannerError::InvalidDemographic { .. }
            | PlannerError::Normalization { .. }
            | PlannerError::DuplicateIds(_)
            | PlannerError::InvalidInput(_)
            | PlannerError::Domain(_) => "validation",
            PlannerError::DegeneratePlan(_) | PlannerError::InvalidPlan(_) => "plan",
            PlannerError::Refused { .. } | PlannerError::RankDeficient { .. } => "refusal",
            PlannerError::Parse { .. } => "parse",
            PlannerError::Io { .. } | PlannerError::Json(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, PlannerError>;
