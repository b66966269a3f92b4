//! File formats: demographics and log CSVs, plan and schedule JSON.
//!
//! Numbers written by this module are rounded to 12 significant digits so
//! outputs are byte-stable across platforms and reload to the same values.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{OutcomeLog, OutcomeRecord};
use crate::error::{PlannerError, Result};
use crate::model::{Demographic, ObjectiveSpec, TransformedInput};
use crate::plan::{predicted_shares, Plan, ReportMetrics};
use crate::sim::{CampaignSpec, SpendRecord};

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn io_err(path: &Path, source: std::io::Error) -> PlannerError {
    PlannerError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &str, err: &csv::Error) -> PlannerError {
    let line = err.position().map_or(0, |p| p.line());
    let reason = match err.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => err.to_string(),
    };
    PlannerError::Parse {
        path: path.to_string(),
        line,
        reason,
    }
}

fn read_csv<T: DeserializeOwned, R: Read>(reader: R, label: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row.map_err(|e| parse_err(label, &e))?);
    }
    Ok(rows)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| io_err(path, e))
}

/// Demographics from CSV with header `id,label,alpha,q,phi` (`label` may be
/// omitted). Duplicate ids are rejected; value checks are left to
/// [`crate::PlanInput::validate`].
pub fn read_demographics<R: Read>(reader: R, label: &str) -> Result<Vec<Demographic>> {
    let rows: Vec<Demographic> = read_csv(reader, label)?;
    if rows.is_empty() {
        return Err(PlannerError::Parse {
            path: label.to_string(),
            line: 1,
            reason: "no demographic rows".into(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut duplicates = BTreeSet::new();
    for d in &rows {
        if !seen.insert(d.id.as_str()) {
            duplicates.insert(d.id.clone());
        }
    }
    if !duplicates.is_empty() {
        return Err(PlannerError::DuplicateIds(duplicates.into_iter().collect()));
    }
    Ok(rows)
}

pub fn load_demographics(path: &Path) -> Result<Vec<Demographic>> {
    read_demographics(open(path)?, &path.display().to_string())
}

pub fn write_demographics<W: Write>(writer: W, demographics: &[Demographic]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for d in demographics {
        let row = Demographic {
            alpha: round12(d.alpha),
            q: round12(d.q),
            phi: round12(d.phi),
            ..d.clone()
        };
        w.serialize(row).map_err(|e| parse_err("demographics output", &e))?;
    }
    w.flush().map_err(|e| io_err(Path::new("demographics output"), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignDoc {
    pub id: String,
    pub members: Vec<String>,
    #[serde(rename = "Y")]
    pub y: f64,
    pub b: f64,
    pub daily_budget: f64,
    pub q_sum: f64,
    pub w_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareDoc {
    pub id: String,
    pub rho: f64,
    pub share: f64,
}

/// The plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub campaigns: Vec<CampaignDoc>,
    pub unassigned: Vec<String>,
    pub objective: ObjectiveSpec,
    pub value: f64,
    pub shares: Vec<ShareDoc>,
    pub metrics: ReportMetrics,
}

impl PlanDocument {
    pub fn new(plan: &Plan, t: &TransformedInput, objective: ObjectiveSpec) -> Result<Self> {
        let shares = predicted_shares(plan, t)?
            .into_iter()
            .map(|(id, s)| ShareDoc {
                id,
                rho: round12(s.rho),
                share: round12(s.share),
            })
            .collect();
        Ok(PlanDocument {
            campaigns: plan
                .campaigns
                .iter()
                .map(|c| CampaignDoc {
                    id: c.id.clone(),
                    members: c.members.clone(),
                    y: round12(c.level),
                    b: round12(c.b),
                    daily_budget: round12(c.daily_budget),
                    q_sum: round12(c.q_sum),
                    w_sum: round12(c.w_sum),
                })
                .collect(),
            unassigned: plan.unassigned.clone(),
            objective,
            value: round12(plan.objective_value),
            shares,
            metrics: ReportMetrics {
                satisfied_count: plan.metrics.satisfied_count,
                cpv: round12(plan.metrics.cpv),
                size_ratio: round12(plan.metrics.size_ratio),
            },
        })
    }

    pub fn campaign_specs(&self) -> Vec<CampaignSpec> {
        self.campaigns
            .iter()
            .map(|c| CampaignSpec::new(c.id.clone(), c.members.clone(), c.daily_budget))
            .collect()
    }
}

fn round_value(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(r) = serde_json::Number::from_f64(round12(x)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits and a
/// trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| PlannerError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        reason: e.to_string(),
    })
}

pub fn emit_plan(doc: &PlanDocument, path: &Path) -> Result<()> {
    write_text(path, &to_json(doc)?)
}

pub fn load_plan(path: &Path) -> Result<PlanDocument> {
    read_json(path)
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    day: u32,
    campaign_id: &'a str,
    demographic_id: &'a str,
    spend: f64,
    conversions: f64,
}

/// Episode CSV: `day,campaign_id,demographic_id,spend,conversions`.
pub fn write_episode<W: Write>(writer: W, records: &[SpendRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(EpisodeRow {
            day: r.day,
            campaign_id: &r.campaign_id,
            demographic_id: &r.demographic_id,
            spend: round12(r.spend),
            conversions: round12(r.conversions),
        })
        .map_err(|e| parse_err("episode output", &e))?;
    }
    w.flush().map_err(|e| io_err(Path::new("episode output"), e))
}

pub fn read_episode<R: Read>(reader: R, label: &str) -> Result<Vec<SpendRecord>> {
    read_csv(reader, label)
}

pub fn load_episode(path: &Path) -> Result<Vec<SpendRecord>> {
    read_episode(open(path)?, &path.display().to_string())
}

/// Outcomes CSV: `campaign_id,demographic_id,conversions,spend`.
pub fn read_outcomes<R: Read>(reader: R, label: &str) -> Result<OutcomeLog> {
    OutcomeLog::new(read_csv::<OutcomeRecord, _>(reader, label)?)
}

pub fn load_outcomes(path: &Path) -> Result<OutcomeLog> {
    read_outcomes(open(path)?, &path.display().to_string())
}

pub fn write_outcomes<W: Write>(writer: W, log: &OutcomeLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &log.records {
        w.serialize(OutcomeRecord {
            conversions: round12(r.conversions),
            spend: round12(r.spend),
            ..r.clone()
        })
        .map_err(|e| parse_err("outcomes output", &e))?;
    }
    w.flush().map_err(|e| io_err(Path::new("outcomes output"), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub id: String,
    pub q_hat: f64,
    pub phi_hat: f64,
}

/// Params CSV: `id,q_hat,phi_hat`.
pub fn write_params<W: Write>(writer: W, rows: &[ParamRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(ParamRow {
            id: r.id.clone(),
            q_hat: round12(r.q_hat),
            phi_hat: round12(r.phi_hat),
        })
        .map_err(|e| parse_err("params output", &e))?;
    }
    w.flush().map_err(|e| io_err(Path::new("params output"), e))
}

pub fn read_params<R: Read>(reader: R, label: &str) -> Result<Vec<ParamRow>> {
    read_csv(reader, label)
}
