use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_parity-planner"));
    cmd.env("PARITY_PLANNER_THREADS", "2");
    cmd
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_step_on_i4() {
    let i4 = data("i4.csv");
    let out = run(&["plan", "--objective", "step", "--gamma", "1.0", "--k", "2", "--in", path(&i4)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["metrics"]["satisfied_count"], 3);
    let budgets: f64 = doc["campaigns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["daily_budget"].as_f64().unwrap())
        .sum();
    assert!((budgets - 100.0).abs() < 1e-9);
}

#[test]
fn plan_output_is_byte_stable() {
    let dir = TempDir::new().unwrap();
    let twelve = data("synthetic12.csv");
    let mut files = Vec::new();
    for name in ["a.json", "b.json"] {
        let p = dir.path().join(name);
        let out = run(&[
            "plan", "--objective", "tvd", "--k", "3", "--budget", "1000", "--in", path(&twelve), "--out", path(&p),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        files.push(fs::read(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn oracle_tvd_k1() {
    let i4 = data("i4.csv");
    let out = run(&["oracle", "--objective", "tvd", "--k", "1", "--in", path(&i4)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let opt = text
        .lines()
        .find_map(|l| l.strip_prefix("OPT "))
        .or_else(|| text.lines().find_map(|l| l.strip_prefix("OPT: ")))
        .expect("OPT line");
    let opt: f64 = opt.trim().parse().unwrap();
    // One campaign over everything at level 1 / sum(w) = 1 / 2.2.
    let expected = [(0.4, 0.4 / 0.4), (0.3, 0.3 / 0.6), (0.2, 0.2 / 0.8), (0.1, 0.1 / 0.8)]
        .iter()
        .map(|&(a, b): &(f64, f64)| (a / b) * (1.0 / 2.2 - b).abs())
        .sum::<f64>();
    assert!(opt <= expected + 1e-9, "{opt} vs {expected}");
}

#[test]
fn alpha_sum_violation_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "id,label,alpha,q,phi\na,,0.5,1,1\nb,,0.4,1,1\n").unwrap();
    let out = run(&["plan", "--objective", "tvd", "--k", "1", "--in", path(&p)]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
    assert!(msg.contains("0.9"), "{msg}");

    let ok = run(&["--renormalize", "plan", "--objective", "tvd", "--k", "1", "--in", path(&p)]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
}

#[test]
fn duplicate_ids_rejected() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("dup.csv");
    fs::write(&p, "id,label,alpha,q,phi\na,,0.5,1,1\na,,0.5,1,1\n").unwrap();
    let out = run(&["plan", "--objective", "tvd", "--k", "1", "--in", path(&p)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains('a'));
}

#[test]
fn oversized_oracle_is_refused() {
    let twelve = data("synthetic12.csv");
    let out = run(&["oracle", "--objective", "step", "--gamma", "0.9", "--k", "2", "--in", path(&twelve)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let i4 = data("i4.csv");
    for args in [
        vec!["plan", "--objective", "nope", "--k", "1", "--in", path(&i4)],
        vec!["plan", "--objective", "step", "--k", "1", "--in", path(&i4)],
        vec!["plan", "--objective", "tvd", "--gamma", "0.5", "--k", "1", "--in", path(&i4)],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn simulate_then_analyze() {
    let dir = TempDir::new().unwrap();
    let i4 = data("i4.csv");
    let plan = dir.path().join("plan.json");
    let log = dir.path().join("log.csv");
    let report = dir.path().join("report.json");

    let out = run(&["plan", "--objective", "tvd", "--k", "2", "--in", path(&i4), "--out", path(&plan)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = run(&["simulate", "--plan", path(&plan), "--truth", path(&i4), "--out", path(&log)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = run(&["analyze", "--log", path(&log), "--alphas", path(&i4), "--out", path(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let doc: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let ratio = &doc["spend_ratio"];
    assert!((ratio["min"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((ratio["max"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn design_simulate_learn_recovers_parameters() {
    let dir = TempDir::new().unwrap();
    let twelve = data("synthetic12.csv");
    let schedule = dir.path().join("schedule.json");
    let revealed = dir.path().join("revealed.json");
    let log = dir.path().join("log.csv");
    let params = dir.path().join("params.csv");

    let steps: [Vec<&str>; 3] = [
        vec!["learn", "--design", "--in", path(&twelve), "--k", "4", "--out", path(&schedule)],
        vec![
            "simulate", "--schedule", path(&schedule), "--truth", path(&twelve), "--days", "5",
            "--budget", "400", "--out", path(&log), "--revealed-out", path(&revealed),
        ],
        vec!["learn", "--episode", path(&log), "--schedule", path(&revealed), "--out", path(&params)],
    ];
    for args in &steps {
        let out = run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
    }

    let truth = parity_planner::io::load_demographics(&twelve).unwrap();
    let rows = parity_planner::io::read_params(fs::File::open(&params).unwrap(), "params").unwrap();
    assert_eq!(rows.len(), truth.len());
    for d in &truth {
        let row = rows.iter().find(|r| r.id == d.id).unwrap();
        assert!((row.q_hat - d.q).abs() / d.q < 1e-6, "{}", d.id);
        assert!((row.phi_hat - d.phi).abs() / d.phi < 1e-6, "{}", d.id);
    }
}

#[test]
fn episode_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let twelve = data("synthetic12.csv");
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let p = dir.path().join(name);
        let out = run(&[
            "episode", "--objective", "step", "--gamma", "0.9", "--k", "4", "--budget", "1000", "--in",
            path(&twelve), "--truth", path(&twelve), "--days", "10", "--refit", "5", "--seed", "3", "--out",
            path(&p),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        outputs.push(fs::read(&p).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
