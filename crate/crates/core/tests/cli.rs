use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crlr::solver::accuracy;
use crlr::{fit, load_dataset, Hyperparams, LabelColumn, Problem, SolverConfig};

fn crlr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crlr"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = crlr(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["--seed", "7", "--out-dir", s(d), "generate", "--n", "200"]);
    }
    for f in ["data.csv", "metadata.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let text = fs::read_to_string(a.join("data.csv")).unwrap();
    assert!(text.starts_with("c0,c1,"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn predict_on_training_file_reproduces_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&[
        "--seed",
        "3",
        "--out-dir",
        s(out),
        "generate",
        "--n",
        "300",
        "--p-causal",
        "4",
        "--p-noise",
        "4",
    ]);
    let data = out.join("data.csv");
    ok(&[
        "--out-dir",
        s(out),
        "train",
        "--data",
        s(&data),
        "--intercept",
        "--max-outer-iters",
        "15",
    ]);
    ok(&[
        "--out-dir",
        s(out),
        "predict",
        "--model",
        s(&out.join("model.txt")),
        "--data",
        s(&data),
    ]);

    let dataset = load_dataset(&data, &LabelColumn::Name("y".into()))
        .unwrap()
        .dataset
        .with_intercept();
    let cfg = SolverConfig {
        max_outer_iters: 15,
        ..SolverConfig::default()
    };
    let res = fit(&dataset, &Hyperparams::default(), &cfg).unwrap();
    let acc = accuracy(
        &Problem::<f64>::from_dataset(&dataset),
        res.state.beta.view(),
    )
    .unwrap();

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0].parse::<f64>().unwrap(), acc);
    let train = fs::read_to_string(out.join("train_metrics.csv")).unwrap();
    assert_eq!(
        train.lines().nth(1).unwrap().split(',').next().unwrap(),
        row[0]
    );
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 301);
}

#[test]
fn sweep_summary_has_one_row_per_method_and_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&[
        "--out-dir",
        s(out),
        "sweep",
        "--train-bias",
        "0.85",
        "--grid",
        "0.1:0.9:0.1",
        "--methods",
        "crlr,lr",
        "--repeats",
        "2",
        "--n",
        "200",
        "--p-causal",
        "3",
        "--p-noise",
        "3",
        "--max-outer-iters",
        "5",
    ]);
    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method,bias_rate,mean_rmse,std_rmse");
    assert_eq!(lines.len(), 1 + 2 * 9);
    assert!(lines[1].starts_with("crlr,0.100000,"));
    let rows = fs::read_to_string(out.join("sweep_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 9 * 2);
}

#[test]
fn sweep_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        ok(&[
            "--threads",
            threads,
            "--seed",
            "5",
            "--out-dir",
            s(&out),
            "sweep",
            "--grid",
            "0.2,0.5,0.8",
            "--methods",
            "crlr,lr,lr-l1,two-step",
            "--repeats",
            "3",
            "--n",
            "150",
            "--p-causal",
            "3",
            "--p-noise",
            "3",
            "--max-outer-iters",
            "5",
            "--intercept",
        ]);
        fs::read(out.join("sweep_rows.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("4", "four"));
}

#[test]
fn manifest_reruns_identically_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&[
        "--seed",
        "11",
        "--out-dir",
        s(out),
        "generate",
        "--n",
        "150",
        "--p-causal",
        "3",
        "--p-noise",
        "3",
    ]);
    let a = out.join("a");
    ok(&[
        "--out-dir",
        s(&a),
        "train",
        "--data",
        s(&out.join("data.csv")),
        "--max-outer-iters",
        "4",
        "--lambda2",
        "0.5",
    ]);
    let manifest = a.join("train_manifest.txt");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("\nlambda2=0.5\n"));
    assert!(text.contains("# command=train\n"));
    assert!(text.contains("sha256="));

    let b = out.join("b");
    ok(&["--config", s(&manifest), "--out-dir", s(&b), "train"]);
    for f in [
        "model.txt",
        "weights.csv",
        "balance.csv",
        "train_metrics.csv",
        "trace.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }

    let c = out.join("c");
    ok(&[
        "--config",
        s(&manifest),
        "--out-dir",
        s(&c),
        "train",
        "--lambda2",
        "0.25",
    ]);
    let model = fs::read_to_string(c.join("model.txt")).unwrap();
    assert!(model.contains("lambda2 2.5000000000000000e-1"));
}

#[test]
fn balance_command_matches_training_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&[
        "--seed",
        "2",
        "--out-dir",
        s(out),
        "generate",
        "--n",
        "150",
        "--p-causal",
        "3",
        "--p-noise",
        "3",
    ]);
    let data = out.join("data.csv");
    ok(&[
        "--out-dir",
        s(out),
        "train",
        "--data",
        s(&data),
        "--max-outer-iters",
        "4",
    ]);
    ok(&[
        "--out-dir",
        s(out),
        "balance",
        "--data",
        s(&data),
        "--weights",
        s(&out.join("weights.csv")),
        "--output",
        "again.csv",
    ]);
    assert_eq!(
        fs::read_to_string(out.join("balance.csv")).unwrap(),
        fs::read_to_string(out.join("again.csv")).unwrap()
    );
}

fn error_of(args: &[&str]) -> (i32, String) {
    let out = crlr(args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    (out.status.code().unwrap(), stderr)
}

#[test]
fn failures_have_distinct_codes_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let ragged = out.join("ragged.csv");
    fs::write(&ragged, "a,b,y\n1,0,1\n1,0\n").unwrap();
    let degenerate = out.join("degenerate.csv");
    fs::write(&degenerate, "a,b,y\n1,1,1\n1,1,0\n").unwrap();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["train", "--bogus"], 2, "usage"),
        (
            &["--out-dir", s(out), "train", "--data", "/nonexistent/d.csv"],
            3,
            "missing_file",
        ),
        (
            &["--out-dir", s(out), "train", "--data", s(&ragged)],
            4,
            "ragged_row",
        ),
        (
            &["--out-dir", s(out), "generate", "--bias-rate", "1.5"],
            5,
            "invalid_parameter",
        ),
        (
            &["--out-dir", s(out), "train", "--data", s(&degenerate)],
            5,
            "empty_balancing",
        ),
    ];
    for (args, code, kind) in cases {
        let (got, stderr) = error_of(args);
        assert_eq!(got, code, "{args:?}: {stderr}");
        let lines: Vec<&str> = stderr.lines().collect();
        assert_eq!(lines.len(), 1, "{stderr}");
        assert!(
            lines[0].starts_with(&format!("error kind={kind} code={code} message=")),
            "{stderr}"
        );
    }
}

#[test]
fn help_lists_defaults_and_exit_codes() {
    let out = crlr(&["train", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "--lambda1",
        "[default: 1]",
        "[default: 0.1]",
        "--max-outer-iters",
        "[default: 200]",
        "--threads",
        "--config",
    ] {
        assert!(help.contains(needle), "{needle} missing");
    }
    let top = String::from_utf8(crlr(&["--help"]).stdout).unwrap();
    assert!(top.contains("Exit codes"));
}
