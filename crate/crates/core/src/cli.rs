//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 when a solver
//! refuses the request. Errors are reported on one line as
//! `error[<kind>]: <message>`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{parity_feasibility, proportional_spend_ratio, specificity};
use crate::error::{PlannerError, Result};
use crate::io::{
    emit_plan, load_demographics, load_episode, load_outcomes, load_plan, read_json, to_json,
    write_episode, write_params, write_text, ParamRow, PlanDocument,
};
use crate::learning::{design_rotation_splits, infer_phi, infer_q, RotationSchedule};
use crate::model::{renormalize_alpha, transform, Demographic, ObjectiveSpec, PlanInput};
use crate::monotone::MonotoneFunction;
use crate::oracle::{oracle_monotone, oracle_step, oracle_tvd};
use crate::plan::realize_budgets;
use crate::sim::{
    run_episode, simulate_day, CampaignSpec, EpisodeConfig, GroundTruth, PacingConfig, SimMode,
    SpendRecord, Unpaced,
};
use crate::solve::solve;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_190_611;

/// Environment variable capping worker threads (0 = automatic).
pub const THREADS_ENV: &str = "PARITY_PLANNER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "parity-planner",
    version,
    about = "Plan ad campaigns and budgets for demographic parity in conversions"
)]
pub struct Cli {
    /// Rescale population shares to sum to one instead of rejecting the input.
    #[arg(long, global = true)]
    pub renormalize: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for campaigns and daily budgets.
    Plan(PlanArgs),
    /// Exhaustive optimum for small instances.
    Oracle(OracleArgs),
    /// Run a plan or a rotation schedule on the simulated platform.
    Simulate(SimulateArgs),
    /// Design a rotation schedule, or infer q and phi from a simulated run.
    Learn(LearnArgs),
    /// Specificity, parity feasibility and spend proportionality of a log.
    Analyze(AnalyzeArgs),
    /// Solve, simulate and refit conversion rates over a horizon.
    Episode(EpisodeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveKind {
    Step,
    MonotoneLinear,
    Tvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Expected,
    Stochastic,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Expected => SimMode::Expected,
            ModeArg::Stochastic => SimMode::Stochastic,
        }
    }
}

#[derive(Debug, Args)]
pub struct ObjectiveArgs {
    #[arg(long, value_enum)]
    pub objective: ObjectiveKind,
    /// Threshold for step and monotone-linear objectives, in (0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Maximum number of campaigns.
    #[arg(long)]
    pub k: usize,
}

impl ObjectiveArgs {
    fn spec(&self) -> Result<ObjectiveSpec> {
        let spec = match (self.objective, self.gamma) {
            (ObjectiveKind::Step, Some(gamma)) => ObjectiveSpec::Step { gamma },
            (ObjectiveKind::MonotoneLinear, Some(gamma)) => ObjectiveSpec::MonotoneLinear { gamma },
            (ObjectiveKind::Tvd, None) => ObjectiveSpec::Tvd,
            (ObjectiveKind::Tvd, Some(_)) => {
                return Err(PlannerError::InvalidInput(
                    "--gamma does not apply to the tvd objective".into(),
                ))
            }
            (_, None) => {
                return Err(PlannerError::InvalidInput(
                    "--gamma is required for step and monotone-linear objectives".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    /// Daily budget in dollars.
    #[arg(long, default_value_t = 100.0)]
    pub budget: f64,
    /// Demographics CSV (`id,label,alpha,q,phi`).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Plan JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Also write the witness as a plan JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plan JSON whose campaigns run every day.
    #[arg(long, conflicts_with = "schedule", required_unless_present = "schedule")]
    pub plan: Option<PathBuf>,
    /// Rotation schedule JSON; day `d` runs split `d` (cycling).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Ground truth CSV in the demographics format.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Expected)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub days: u32,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Daily budget split evenly over a schedule's groups.
    #[arg(long, default_value_t = 100.0, requires = "schedule")]
    pub budget: f64,
    /// Unpaced spend per unit of q; by default twice the budget.
    #[arg(long)]
    pub dollars_per_q: Option<f64>,
    /// Episode CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Schedule JSON with the revealed scaling factors filled in.
    #[arg(long, requires = "schedule")]
    pub revealed_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Write a rotation schedule for the demographics in `--in` instead of
    /// inferring parameters.
    #[arg(long, requires_all = ["input", "k"], conflicts_with_all = ["episode", "schedule"])]
    pub design: bool,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Episode CSV from `simulate --schedule`.
    #[arg(long, requires = "schedule", required_unless_present = "design")]
    pub episode: Option<PathBuf>,
    /// Schedule JSON with revealed scaling factors.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Params CSV, or schedule JSON with `--design`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Outcomes CSV (`campaign_id,demographic_id,conversions,spend`).
    #[arg(long)]
    pub log: PathBuf,
    /// Demographics CSV supplying alpha and q.
    #[arg(long)]
    pub alphas: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EpisodeArgs {
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long, default_value_t = 100.0)]
    pub budget: f64,
    /// Initial estimates in the demographics format.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Stochastic)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 30)]
    pub days: u32,
    /// Days between conversion-rate refits.
    #[arg(long, default_value_t = 5)]
    pub refit: u32,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episode summary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-day records CSV.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
}

fn demographics(path: &Path, renormalize: bool) -> Result<Vec<Demographic>> {
    let mut ds = load_demographics(path)?;
    if renormalize {
        renormalize_alpha(&mut ds)?;
    }
    Ok(ds)
}

fn truth(path: &Path) -> Result<GroundTruth> {
    GroundTruth::from_demographics(&load_demographics(path)?)
}

fn write_csv_to(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    std::fs::write(path, buf).map_err(|source| PlannerError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn flush_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|source| PlannerError::Io {
            path: "<stdout>".into(),
            source,
        })
}

fn cmd_plan(args: &PlanArgs, renormalize: bool, out: &mut dyn Write) -> Result<()> {
    let input = PlanInput::new(
        demographics(&args.input, renormalize)?,
        args.objective.k,
        args.budget,
        args.objective.spec()?,
    );
    let plan = solve(&input)?;
    let doc = PlanDocument::new(&plan, &transform(&input)?, input.objective)?;
    match &args.out {
        Some(path) => emit_plan(&doc, path),
        None => flush_out(out, &to_json(&doc)?),
    }
}

fn cmd_oracle(args: &OracleArgs, renormalize: bool, out: &mut dyn Write) -> Result<()> {
    let objective = args.objective.spec()?;
    let input = PlanInput::new(
        demographics(&args.input, renormalize)?,
        args.objective.k,
        100.0,
        objective,
    );
    input.validate()?;
    let t = transform(&input)?;
    let result = match objective {
        ObjectiveSpec::Step { gamma } => oracle_step(&t, input.k, gamma)?,
        ObjectiveSpec::MonotoneLinear { gamma } => {
            oracle_monotone(&t, input.k, &MonotoneFunction::linear_cap(gamma)?)?
        }
        ObjectiveSpec::Tvd => oracle_tvd(&t, input.k)?,
    };
    let witness = realize_budgets(&result.witness, &input)?;
    let mut text = format!(
        "objective {objective}\nk {}\nOPT {}\nenumerated {}\n",
        input.k,
        crate::io::round12(result.value),
        result.enumerated
    );
    for c in &witness.campaigns {
        text.push_str(&format!(
            "witness {} Y={} members={}\n",
            c.id,
            crate::io::round12(c.level),
            c.members.join(",")
        ));
    }
    if !witness.unassigned.is_empty() {
        text.push_str(&format!("unassigned {}\n", witness.unassigned.join(",")));
    }
    if let Some(path) = &args.out {
        emit_plan(&PlanDocument::new(&witness, &t, objective)?, path)?;
    }
    flush_out(out, &text)
}

fn pacing(dollars_per_q: Option<f64>) -> PacingConfig {
    match dollars_per_q {
        Some(d) => PacingConfig {
            unpaced: Unpaced::DollarsPerQ(d),
            ..PacingConfig::default()
        },
        None => PacingConfig::default(),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let truth = truth(&args.truth)?;
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let pacing = pacing(args.dollars_per_q);
    let mode = SimMode::from(args.mode);
    let mut records: Vec<SpendRecord> = Vec::new();
    if let Some(path) = &args.plan {
        let campaigns = load_plan(path)?.campaign_specs();
        for day in 0..args.days {
            records.extend(simulate_day(&campaigns, &truth, mode, &pacing, seed, day)?.records);
        }
    } else {
        let path = args.schedule.as_ref().expect("clap enforces plan or schedule");
        let mut schedule: RotationSchedule = read_json(path)?;
        if schedule.days.is_empty() {
            return Err(PlannerError::InvalidInput("schedule has no days".into()));
        }
        let mut revealed: Vec<Option<Vec<f64>>> = vec![None; schedule.days.len()];
        for day in 0..args.days {
            let slot = day as usize % schedule.days.len();
            let campaigns: Vec<CampaignSpec> = schedule.campaigns(slot, args.budget);
            let result = simulate_day(&campaigns, &truth, mode, &pacing, seed, day)?;
            if revealed[slot].is_none() {
                let by_id: BTreeMap<&str, f64> = result
                    .revealed
                    .iter()
                    .map(|r| (r.campaign_id.as_str(), r.q_sum))
                    .collect();
                revealed[slot] = Some(
                    (0..schedule.days[slot].len())
                        .map(|g| by_id.get(format!("g{}", g + 1).as_str()).copied().unwrap_or(0.0))
                        .collect(),
                );
            }
            records.extend(result.records);
        }
        if let Some(out) = &args.revealed_out {
            let all: Option<Vec<Vec<f64>>> = revealed.into_iter().collect();
            schedule.revealed = Some(all.ok_or_else(|| {
                PlannerError::InvalidInput(format!(
                    "--days {} does not cover all {} schedule days",
                    args.days,
                    schedule.days.len()
                ))
            })?);
            write_text(out, &to_json(&schedule)?)?;
        }
    }
    write_csv_to(&args.out, |buf| write_episode(buf, &records))
}

fn cmd_learn(args: &LearnArgs, renormalize: bool) -> Result<()> {
    if args.design {
        let ds = demographics(args.input.as_ref().expect("clap requires --in"), renormalize)?;
        let k = args.k.expect("clap requires --k");
        let ids = ds.into_iter().map(|d| d.id).collect::<Vec<_>>();
        let schedule = design_rotation_splits(ids.len(), k)?.with_ids(ids)?;
        log::info!("rotation schedule uses {} days", schedule.day_count());
        return write_text(&args.out, &to_json(&schedule)?);
    }
    let schedule: RotationSchedule =
        read_json(args.schedule.as_ref().expect("clap requires --schedule"))?;
    let revealed = schedule.revealed.as_ref().ok_or_else(|| {
        PlannerError::InvalidInput(
            "schedule has no revealed scaling factors; run simulate with --revealed-out".into(),
        )
    })?;
    let q = infer_q(&schedule, revealed)?;
    log::info!("q residual norm {}", q.residual_norm);
    let records = load_episode(args.episode.as_ref().expect("clap requires --episode"))?;
    let q_map = q.as_map();
    let phi = infer_phi(&records, &q_map, None)?;
    let rows: Vec<ParamRow> = q
        .ids
        .iter()
        .map(|id| ParamRow {
            id: id.clone(),
            q_hat: q_map[id],
            phi_hat: phi[id],
        })
        .collect();
    write_csv_to(&args.out, |buf| write_params(buf, &rows))
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let log = load_outcomes(&args.log)?;
    let ds = load_demographics(&args.alphas)?;
    let alphas: BTreeMap<String, f64> = ds.iter().map(|d| (d.id.clone(), d.alpha)).collect();
    let q: BTreeMap<String, f64> = ds.iter().map(|d| (d.id.clone(), d.q)).collect();
    let report = specificity(&log, &alphas, Some(args.ci_level))?;
    let feasibility = parity_feasibility(&report, &alphas);
    let spend = proportional_spend_ratio(&log, &q)?;
    let doc = serde_json::json!({
        "specificity": report,
        "feasibility": feasibility,
        "spend_ratio": spend,
    });
    write_text(&args.out, &to_json(&doc)?)
}

fn cmd_episode(args: &EpisodeArgs, renormalize: bool) -> Result<()> {
    let input = PlanInput::new(
        demographics(&args.input, renormalize)?,
        args.objective.k,
        args.budget,
        args.objective.spec()?,
    );
    let truth = truth(&args.truth)?;
    let config = EpisodeConfig::new(
        args.days,
        args.refit,
        args.mode.into(),
        args.seed.unwrap_or(DEFAULT_SEED),
    );
    let log = run_episode(&input, &truth, &config)?;
    if let Some(path) = &args.records_out {
        write_csv_to(path, |buf| write_episode(buf, &log.records))?;
    }
    write_text(&args.out, &to_json(&log)?)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        PlannerError::InvalidInput(format!("{THREADS_ENV} must be a nonnegative integer, got {raw:?}"))
    })?;
    if threads > 0 {
        // A pool may already exist when the library is driven in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Plan(a) => cmd_plan(a, cli.renormalize, out),
        Command::Oracle(a) => cmd_oracle(a, cli.renormalize, out),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Learn(a) => cmd_learn(a, cli.renormalize),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Episode(a) => cmd_episode(a, cli.renormalize),
    }
}

/// Exit code for an error.
pub fn exit_code(err: &PlannerError) -> i32 {
    if err.is_refusal() {
        2
    } else {
        1
    }
}

/// Runs the tool on `argv` (including the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(err, "error[usage]: {}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.kind());
            exit_code(&e)
        }
    }
}

/// Runs the tool on the process arguments with the standard streams.
pub fn run() -> i32 {
    run_with(
        std::env::args_os(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}
