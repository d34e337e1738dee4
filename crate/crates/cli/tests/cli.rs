use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing {key}"))
}

fn dilate(dir: &Path, q: &str, b: &str) -> String {
    let path = dir.join(format!("depol_q{q}_b{b}.json"));
    let p = path.to_str().unwrap().to_string();
    let out = sqkd(&["dilate", "--q", q, "--b", b, "--output", &p]);
    assert!(out.status.success(), "{}", stderr(&out));
    p
}

#[test]
fn keyrate_noiseless() {
    let out = sqkd(&["keyrate", "--q", "0", "--b", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((num(&v, "r") - 1.0).abs() < 1e-12);
    assert_eq!(v["aborted"], false);
    for key in [
        "eta",
        "capB",
        "lambda",
        "hBA",
        "sBEC",
        "sEC_upper",
        "statistics",
        "distribution",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn keyrate_depolarized() {
    let v = json(&sqkd(&["keyrate", "--q", "0.1", "--b", "0"]));
    assert!((num(&v, "r") - 0.0432).abs() < 5e-4);
    assert!((num(&v, "lambda") - 0.9).abs() < 1e-12);
}

#[test]
fn attack_file_matches_scenario() {
    let dir = tempfile::tempdir().unwrap();
    for (q, b) in [("0.1", "0"), ("0.05", "-0.2"), ("0.3", "0.25")] {
        let path = dilate(dir.path(), q, b);
        let from_file = json(&sqkd(&["keyrate", "--attack", &path]));
        let from_flags = json(&sqkd(&["keyrate", "--q", q, "--b", b]));
        for key in ["eta", "capB", "lambda", "hBA", "sBEC", "sEC_upper", "r"] {
            assert!(
                (num(&from_file, key) - num(&from_flags, key)).abs() < 1e-10,
                "{key}"
            );
        }
        for key in ["qz0", "qz1", "p0plus", "p1plus", "pe1", "peminus"] {
            let (x, y) = (
                num(&from_file["statistics"], key),
                num(&from_flags["statistics"], key),
            );
            assert!((x - y).abs() < 1e-10, "{key}");
        }
    }
}

#[test]
fn keyrate_from_statistics_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stats.json");
    fs::write(
        &path,
        r#"{"b": 0, "qz0": 0.05, "qz1": 0.05, "p0plus": 0.5, "p1plus": 0.5, "pe1": 0.5, "peminus": 0.05}"#,
    )
    .unwrap();
    let v = json(&sqkd(&["keyrate", "--stats", path.to_str().unwrap()]));
    assert!((num(&v, "r") - 0.0432343).abs() < 1e-6);
}

#[test]
fn malformed_inputs_exit_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.json");
    fs::write(&stats, r#"{"b": 0, "qz0": 0.05}"#).unwrap();
    let out = sqkd(&["keyrate", "--stats", stats.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("qz1"), "{}", stderr(&out));

    fs::write(
        &stats,
        r#"{"b": 0, "qz0": 1.5, "qz1": 0, "p0plus": 0.5, "p1plus": 0.5, "pe1": 0.5, "peminus": 0}"#,
    )
    .unwrap();
    let out = sqkd(&["keyrate", "--stats", stats.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("qz0"), "{}", stderr(&out));

    let attack = dir.path().join("attack.json");
    fs::write(
        &attack,
        r#"{"b": 0, "dim": 2, "e0": [[1, 0], [0, 0]], "e1": [[0, 0]], "e2": [[0, 0], [0, 0]], "e3": [[1, 0], [0, 0]]}"#,
    )
    .unwrap();
    let out = sqkd(&["keyrate", "--attack", attack.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("e1"), "{}", stderr(&out));

    let out = sqkd(&[
        "keyrate",
        "--attack",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn conflicting_sources_are_rejected() {
    let out = sqkd(&["keyrate", "--q", "0.1", "--b", "0", "--stats", "x.json"]);
    assert_ne!(out.status.code(), Some(0));
    let out = sqkd(&["keyrate", "--q", "0.1"]);
    assert_ne!(out.status.code(), Some(0));
    let out = sqkd(&["keyrate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn abort_condition_exits_two_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.json");
    // Nothing reaches A as |1> from reflected rounds: q00 = 0.
    fs::write(
        &stats,
        r#"{"b": 0, "qz0": 0.1, "qz1": 0.1, "p0plus": 0.5, "p1plus": 0.5, "pe1": 0, "peminus": 0.1}"#,
    )
    .unwrap();
    let out = sqkd(&["keyrate", "--stats", stats.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["aborted"], true);
    assert!(v["abort_reason"].is_string());
}

#[test]
fn simulate_noiseless() {
    let out = sqkd(&[
        "simulate",
        "--q",
        "0",
        "--b",
        "0",
        "--iterations",
        "100000",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["raw_key_errors"], 0);
    assert_eq!(v["seed"], 7);
    assert!(v["generator"].as_str().unwrap().contains("ChaCha"));
    assert_eq!(v["estimate"]["qz0"]["successes"], 0);
    assert_eq!(v["estimate"]["peminus"]["successes"], 0);
    // Only sampling noise in the mismatched-basis frequencies separates r_hat from 1.
    let r = num(&v["report"], "r");
    assert!(r > 0.95 && r <= 1.0, "{r}");
}

#[test]
fn simulate_depolarized_and_reproducible() {
    let args = [
        "simulate",
        "--q",
        "0.1",
        "--b",
        "0",
        "--iterations",
        "1000000",
        "--seed",
        "1",
    ];
    let first = sqkd(&args);
    let second = sqkd(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let v = json(&first);
    assert!((num(&v["report"], "r") - 0.0432).abs() < 0.02);
    assert_eq!(v["tally"]["iterations"], 1_000_000);
}

#[test]
fn simulate_from_attack_file_with_shards() {
    let dir = tempfile::tempdir().unwrap();
    let path = dilate(dir.path(), "0.1", "-0.1");
    let out = sqkd(&[
        "simulate",
        "--attack",
        &path,
        "--iterations",
        "200000",
        "--seed",
        "3",
        "--shards",
        "4",
        "--balance",
        "analytic",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["shards"], 4);
    assert_eq!(v["balance_mode"], "analytic");
    let pe1 = &v["estimate"]["pe1"];
    assert!((num(pe1, "value") - 0.59).abs() <= 3.0 * num(pe1, "std_error"));
}

#[test]
fn simulate_single_round_flags_partial_estimate() {
    let out = sqkd(&[
        "simulate",
        "--q",
        "0",
        "--b",
        "0",
        "--iterations",
        "1",
        "--seed",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["report"].is_null());
    assert!(!v["estimate"]["unavailable"].as_array().unwrap().is_empty());
}

#[test]
fn threshold_values() {
    let out = sqkd(&["threshold", "--b-list", "0"]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("b,tau_q"));
    let (b, tau) = lines.next().unwrap().split_once(',').unwrap();
    assert_eq!(b, "0");
    assert!((tau.parse::<f64>().unwrap() - 0.1072).abs() <= 1e-3);

    let text = stdout(&sqkd(&["threshold", "--b-list", "-0.1"]));
    let (b, tau) = text.lines().nth(1).unwrap().split_once(',').unwrap();
    assert_eq!(b, "-0.1");
    assert!((tau.parse::<f64>().unwrap() - 0.1118).abs() <= 1e-3);

    let text = stdout(&sqkd(&["threshold", "--b-list", "0.33,0"]));
    assert_eq!(text.lines().nth(1), Some("0.33,"));
}

#[test]
fn threshold_from_bias_range_as_json() {
    let out = sqkd(&[
        "threshold",
        "--b-min",
        "-0.2",
        "--b-max",
        "0.2",
        "--b-step",
        "0.1",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v.as_array().unwrap().len(), 5);
    assert!(v[0]["tau_q"].as_f64().unwrap() > v[4]["tau_q"].as_f64().unwrap());
}

#[test]
fn sweep_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = sqkd(&[
        "sweep",
        "--b-list",
        "0,-0.1,0.1,0.25",
        "--q-min",
        "0",
        "--q-max",
        "0.15",
        "--q-step",
        "0.001",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "b,q,r,eta,lambda,p_wrong,h_pcorrect,aborted");
    assert_eq!(lines.len(), 1 + 4 * 151);
    assert_eq!(lines[1], "0,0,1,1,1,0,0,false");
    assert!(lines[152].starts_with("-0.1,0,"));
}

#[test]
fn invalid_grid_exits_one() {
    let out = sqkd(&["sweep", "--b-list", "0", "--q-step", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = sqkd(&["sweep", "--b-list", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
    let out = sqkd(&["threshold"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_attack_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dilate(dir.path(), "0.2", "0.1");
    let out = sqkd(&["validate", "--attack", &path]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["passed"], true);

    let identity = dir.path().join("identity.json");
    fs::write(
        &identity,
        r#"{"b": 0, "dim": 1, "e0": [[1, 0]], "e1": [[0, 0]], "e2": [[0, 0]], "e3": [[1, 0]]}"#,
    )
    .unwrap();
    let out = sqkd(&["validate", "--attack", identity.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in [
        "norm_residual_01",
        "norm_residual_23",
        "orthogonality_residual",
    ] {
        assert_eq!(num(&v, key), 0.0);
    }

    let mut edited: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    edited["e0"][0][0] = Value::from(2.0);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, edited.to_string()).unwrap();
    let out = sqkd(&["validate", "--attack", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["passed"], false);
    assert!(num(&v, "norm_residual_01") > 0.1);

    fs::write(&bad, "{not json").unwrap();
    assert_eq!(
        sqkd(&["validate", "--attack", bad.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn thread_cap_is_honoured_and_checked() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_sqkd"))
            .env("SQKD_THREADS", threads)
            .args([
                "simulate",
                "--q",
                "0.1",
                "--b",
                "0",
                "--iterations",
                "50000",
                "--seed",
                "5",
                "--shards",
                "3",
            ])
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(run("zero").status.code(), Some(1));
}
