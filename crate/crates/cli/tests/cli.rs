use std::process::{Command, Output};

use heisenberg_hsp_cli::config::{
    Command as Cmd, CommonArgs, ExperimentConfig, Format, Mode, U2Arg,
};
use heisenberg_hsp_cli::report::{ExperimentReport, TRIAL_HEADER};
use heisenberg_hsp_cli::suites;
use serde_json::Value;

fn heis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heis-hsp"))
        .args(args)
        .env_remove("HEIS_HSP_TOLERANCE")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["aggregate"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

fn args(prime: u32, subgroup: &str, trials: usize, mode: Mode) -> CommonArgs {
    CommonArgs {
        prime,
        subgroup: subgroup.into(),
        trials,
        mode,
        u2_mode: U2Arg::Probabilistic,
        seed: 11,
        format: Format::Json,
        output: None,
        max_repetitions: 50,
    }
}

#[test]
fn solve_hsp_one_shot_rate_within_three_sigma() {
    let out = heis(&[
        "solve-hsp", "--prime", "5", "--subgroup", "A:2,3", "--trials", "1000", "--seed", "7",
        "--u2-mode", "probabilistic", "--mode", "monte-carlo",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["trials"].as_array().unwrap().len(), 1000);
    let c = check(&r, "one_shot_success_rate");
    assert_eq!(c["passed"], true);
    let exact = r["aggregate"]["exact"]["one_shot"].as_f64().unwrap();
    let product = 0.48 * 0.5 * 0.586_274_169_979_694_5 * r["aggregate"]["exact"]["recover_j"].as_f64().unwrap();
    assert!((exact - product).abs() < 1e-9);
    let rate = r["aggregate"]["success_rate"].as_f64().unwrap();
    let successes = r["aggregate"]["successes"].as_u64().unwrap();
    assert_eq!(rate, successes as f64 / 1000.0);
}

#[test]
fn sample_irreps_exact_table() {
    let out = heis(&["sample-irreps", "--prime", "5", "--subgroup", "A:2,3", "--mode", "exact"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let dist: Vec<f64> = r["aggregate"]["distribution"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(dist.len(), 29);
    for a in 0..5usize {
        for b in 0..5usize {
            let want = if (a + 2 * b) % 5 == 0 { 0.04 } else { 0.0 };
            assert!((dist[a * 5 + b] - want).abs() < 1e-12, "({a},{b})");
        }
    }
    for k in 0..4 {
        assert!((dist[25 + k] - 0.2).abs() < 1e-12);
    }
}

#[test]
fn verification_commands_pass() {
    for cmd in ["rep-verify", "state-verify", "cg-verify", "pgm-compare"] {
        let out = heis(&[cmd, "--prime", "3"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        assert_eq!(json(&out)["aggregate"]["passed"], true, "{cmd}");
    }
    let out = heis(&["exact-dist", "--prime", "5", "--subgroup", "A:3,0"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn empty_trial_list_is_valid_json() {
    let out = heis(&["solve-hsp", "--prime", "3", "--subgroup", "T", "--trials", "0", "--mode", "monte-carlo"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["trials"], Value::Array(vec![]));
    assert!(r["aggregate"]["success_rate"].is_null());
}

#[test]
fn three_trials_give_four_csv_lines() {
    let out = heis(&[
        "solve-hscp", "--prime", "5", "--subgroup", "A:1,4", "--trials", "3", "--mode", "monte-carlo",
        "--format", "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], TRIAL_HEADER.join(","));
}

#[test]
fn json_round_trip() {
    let config = ExperimentConfig::resolve(Cmd::SolveHsp, &args(5, "A:2,3", 50, Mode::MonteCarlo), None).unwrap();
    let report = suites::run(&config).unwrap();
    let bytes = report.to_bytes(Format::Json).unwrap();
    assert_eq!(ExperimentReport::from_json(&bytes).unwrap(), report);
}

#[test]
fn same_seed_same_report_at_any_thread_count() {
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_heis-hsp"))
            .args(["solve-hsp", "--prime", "7", "--subgroup", "random", "--trials", "300", "--seed", "99", "--mode", "monte-carlo"])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        let mut v = json(&out);
        v["aggregate"]["wall_time_seconds"] = Value::Null;
        serde_json::to_vec(&v).unwrap()
    };
    let serial = run("1");
    assert_eq!(serial, run("4"));
    assert_eq!(serial, run("1"));
}

#[test]
fn exit_codes() {
    assert_eq!(heis(&["solve-hsp", "--prime", "9"]).status.code(), Some(2));
    assert_eq!(heis(&["solve-hsp", "--subgroup", "N:1"]).status.code(), Some(2));
    assert_eq!(heis(&["rep-verify", "--prime", "11"]).status.code(), Some(2));
    assert_eq!(heis(&["no-such-command"]).status.code(), Some(2));
    let dir = std::env::temp_dir().join("heis-hsp-missing-dir").join("nested");
    let path = dir.join("out.json");
    assert_eq!(
        heis(&["cg-verify", "--prime", "3", "--output", path.to_str().unwrap()]).status.code(),
        Some(3)
    );
    let bad = Command::new(env!("CARGO_BIN_EXE_heis-hsp"))
        .args(["cg-verify", "--prime", "3"])
        .env("HEIS_HSP_TOLERANCE", "-1")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn tolerance_override_is_applied() {
    let out = Command::new(env!("CARGO_BIN_EXE_heis-hsp"))
        .args(["cg-verify", "--prime", "3"])
        .env("HEIS_HSP_TOLERANCE", "1e-30")
        .output()
        .unwrap();
    let r = json(&out);
    assert_eq!(r["config"]["tolerance"].as_f64(), Some(1e-30));
    // rounding noise exceeds a 1e-30 tolerance, so the run must fail
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(r["aggregate"]["passed"], false);
}

#[test]
fn output_file_matches_stdout() {
    let path = std::env::temp_dir().join(format!("heis-hsp-{}.json", std::process::id()));
    let base = ["solve-hscp", "--prime", "3", "--subgroup", "A:1,2", "--trials", "20", "--mode", "monte-carlo"];
    let to_file = heis(&[&base[..], &["--output", path.to_str().unwrap()]].concat());
    assert_eq!(to_file.status.code(), Some(0));
    assert!(to_file.stdout.is_empty());
    let mut a: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let mut b = json(&heis(&base));
    std::fs::remove_file(&path).ok();
    a["aggregate"]["wall_time_seconds"] = Value::Null;
    b["aggregate"]["wall_time_seconds"] = Value::Null;
    a["config"]["output"] = Value::Null;
    assert_eq!(a, b);
}

#[test]
fn random_subgroup_is_resolved_from_the_seed() {
    let pick = |seed: u64| {
        let mut a = args(5, "random", 0, Mode::Exact);
        a.seed = seed;
        ExperimentConfig::resolve(Cmd::SolveHsp, &a, None).unwrap().subgroup
    };
    assert_eq!(pick(1), pick(1));
    let distinct: std::collections::BTreeSet<String> = (0..40).map(pick).collect();
    assert!(distinct.len() > 5);
    assert!(distinct.iter().all(|s| s == "T" || s.starts_with("A:")));
}
