//! End-to-end runs of the `prefeval` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FAST: [&str; 4] = ["--warmup", "500", "--draws", "2000"];

fn prefeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefeval"))
        .args(args)
        .env_remove("PREFEVAL_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_ratings(path: &Path, a: &str, b: &str, outcomes: &[&str]) {
    let lines: Vec<String> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            format!(r#"{{"outcome":"{o}","sample_id":"s{i}","source":"human","system_a":"{a}","system_b":"{b}"}}"#)
        })
        .collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn simulate(dir: &Path, seed: &str) {
    let out = prefeval(&[
        "simulate",
        "--systems",
        "3",
        "--samples",
        "2000",
        "--human-per-pair",
        "60",
        "--seed",
        seed,
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn decide_prints_a_win_for_unanimous_wins() {
    let dir = tempfile::tempdir().unwrap();
    let human = dir.path().join("human.jsonl");
    write_ratings(&human, "a", "b", &[">"; 20]);
    let out = prefeval(&["decide", "--human", human.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let decision: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(decision["verdict"], ">");
    assert_eq!(decision["converged"], true);
}

#[test]
fn decide_rejects_bad_input_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let human = dir.path().join("human.jsonl");
    write_ratings(&human, "a", "b", &[">"; 5]);

    let missing = prefeval(&["decide"]);
    assert_eq!(code(&missing), 2);

    let gamma = prefeval(&["decide", "--human", human.to_str().unwrap(), "--gamma", "1.5"]);
    assert_eq!(code(&gamma), 2);
    assert!(stderr(&gamma).contains("gamma"), "{}", stderr(&gamma));

    fs::write(&human, "{\"outcome\":\">\",\"sample_id\":\"x\",\"source\":\"human\",\"system_a\":\"a\",\"system_b\":\"b\",\"extra\":1}\n").unwrap();
    let strict = prefeval(&["decide", "--human", human.to_str().unwrap()]);
    assert_eq!(code(&strict), 2);
    assert!(stderr(&strict).contains("line 1"), "{}", stderr(&strict));
    let lenient = prefeval(&["decide", "--human", human.to_str().unwrap(), "--lenient"]);
    assert_eq!(code(&lenient), 0, "{}", stderr(&lenient));
}

#[test]
fn decide_requires_a_pair_when_files_cover_several() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "4");
    let human = dir.path().join("human.jsonl");
    let out = prefeval(&["decide", "--human", human.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--pair"));

    let metric = dir.path().join("metric.jsonl");
    let mut args = vec![
        "decide",
        "--human",
        human.to_str().unwrap(),
        "--metric",
        metric.to_str().unwrap(),
        "--pair",
        "sys00:sys02",
    ];
    args.extend(FAST);
    let out = prefeval(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let decision: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(decision["diagnostics"]["exact"], false);
}

#[test]
fn zero_budget_spends_no_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("result.json");
    let out = prefeval(&[
        "protocol",
        "--systems",
        "a,b,c",
        "--oracle-p",
        "0.9,0.05,0.05",
        "--budget",
        "0",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(result["total_annotations"], 0);
    assert_eq!(result["budget_remaining"], 0);
    for pair in result["pairs"].as_object().unwrap().values() {
        assert_eq!(pair["status"], "undecided");
    }
}

#[test]
fn protocol_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "9");
    let metric = dir.path().join("metric.jsonl").display().to_string();
    let human = dir.path().join("human.jsonl").display().to_string();
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let mut args = vec![
            "protocol",
            "--systems",
            "sys00,sys01,sys02",
            "--metric-ratings",
            metric.as_str(),
            "--annotation-pool",
            human.as_str(),
            "--budget",
            "180",
            "--seed",
            "17",
            "--out",
            out_path.to_str().unwrap(),
        ];
        args.extend(FAST);
        let out = prefeval(&args);
        assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));
        (fs::read(out_path).unwrap(), stdout(&out))
    };
    let (first, first_table) = run("a.json");
    let (second, second_table) = run("b.json");
    assert_eq!(first, second);
    assert_eq!(first_table, second_table);
    assert!(first.ends_with(b"\n"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env_seed: Option<&str>, flag: Option<&str>| {
        let out_path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_prefeval"));
        cmd.args(["protocol", "--systems", "a,b", "--oracle-p", "0.4,0.2,0.4", "--budget", "40"])
            .args(["--out", out_path.to_str().unwrap()])
            .env_remove("PREFEVAL_SEED");
        if let Some(s) = env_seed {
            cmd.env("PREFEVAL_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read(out_path).unwrap()
    };
    let from_env = run("env.json", Some("123"), None);
    let from_flag = run("flag.json", None, Some("123"));
    let other = run("other.json", None, Some("124"));
    assert_eq!(from_env, from_flag);
    assert_ne!(from_env, other);
}

#[test]
fn unreachable_live_service_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("result.json");
    let out = prefeval(&[
        "protocol",
        "--systems",
        "a,b",
        "--live",
        "http://127.0.0.1:1",
        "--budget",
        "10",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot reach annotation service"), "{}", stderr(&out));
    assert!(!out_path.exists());
}

#[test]
fn simulated_confusion_matches_the_requested_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefeval(&[
        "simulate",
        "--systems",
        "3",
        "--samples",
        "4000",
        "--mu",
        "ideal",
        "--seed",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let expected = [[0.8, 0.25, 0.1], [0.1, 0.5, 0.1], [0.1, 0.25, 0.8]];
    let text = stdout(&out);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3, "{text}");
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert!((v - expected[r][c]).abs() < 0.02, "row {r} col {c}: {v}");
        }
    }
    for file in ["human.jsonl", "metric.jsonl", "manifest.json", "campaign.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn analyze_scores_the_reference_against_itself_as_correct() {
    let dir = tempfile::tempdir().unwrap();
    let human = dir.path().join("human.jsonl");
    write_ratings(&human, "a", "b", &[">"; 20]);
    let verdicts = dir.path().join("verdicts.json");
    fs::write(&verdicts, r#"{"b:a": "<"}"#).unwrap();
    let report_path = dir.path().join("report.json");
    let out = prefeval(&[
        "analyze",
        "--human",
        human.to_str().unwrap(),
        "--verdicts",
        verdicts.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(report_path).unwrap()).unwrap();
    assert_eq!(report["rates"]["correct"], 1.0);
    assert_eq!(report["rates"]["inversion"], 0.0);
}

#[test]
fn curve_reports_one_row_per_budget() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "5");
    let metric = dir.path().join("metric.jsonl").display().to_string();
    let human = dir.path().join("human.jsonl").display().to_string();
    let curve_path = dir.path().join("curve.json");
    let mut args = vec![
        "curve",
        "--systems",
        "sys00,sys01,sys02",
        "--metric-ratings",
        metric.as_str(),
        "--annotation-pool",
        human.as_str(),
        "--out",
        curve_path.to_str().unwrap(),
    ];
    args.extend(FAST);
    let out = prefeval(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let points: Value = serde_json::from_str(&fs::read_to_string(curve_path).unwrap()).unwrap();
    let points = points.as_array().unwrap();
    assert_eq!(points.len(), 4);
    assert_eq!(points[0]["budget"], 0);
    assert_eq!(points[3]["budget"], 180);
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["decide", "protocol", "analyze", "simulate", "curve"] {
        let out = prefeval(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(stdout(&out).contains("--seed"), "{sub}");
    }
}
