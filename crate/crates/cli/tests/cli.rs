use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpunit::network::{Network, NetworkSpec};
use serde_json::Value;

fn lpunit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpunit")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOY_CONFIG: &str = r#"{
  "data": {"kind": "gauss2", "per_class": 100, "sigma": 0.3, "seed": 5},
  "model": {"input_dim": 2, "layers": [
    {"kind": "lp", "units": 1, "group": 2, "order": {"learned": {"initial_p": 3.0}}},
    {"kind": "dense", "out": 2, "activation": "identity"}
  ]},
  "train": {"learning_rate": 0.1, "momentum": 0.9, "epochs": 60, "valid_fraction": 0.0}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_curvature_rows_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = lpunit(&["gen-data", "curvature", "--n", "5000", "--seed", "1", "--out", p(path)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 5001);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn gen_data_pianoroll_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roll.json");
    let out = lpunit(&["gen-data", "pianoroll", "--n", "4", "--length", "9", "--out", p(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let batch = lpunit::datasets::load_pianoroll(&path).unwrap();
    assert_eq!(batch.sequences.len(), 4);
    assert!(batch.sequences.iter().all(|s| s.len() == 9));
}

#[test]
fn bad_kind_is_usage_error() {
    let out = lpunit(&["gen-data", "spiral", "--out", "x.csv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = lpunit(&["gradcheck", "--bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unwritable_path_is_io_error() {
    let out = lpunit(&["gen-data", "gauss2", "--out", "/nonexistent-dir/sub/x.csv"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn train_toy_config_reaches_zero_error_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY_CONFIG);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for out_dir in [&r1, &r2] {
        let out = lpunit(&["train", "--config", p(&cfg), "--out", p(out_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).contains("\"learning_rate\""), "config is echoed");
    }
    let report = read_json(&r1.join("report.json"));
    assert_eq!(report["train"]["errors"], 0);
    assert_eq!(report["config"]["epochs"], 60);
    for file in ["report.json", "model.json", "config.json"] {
        assert_eq!(
            std::fs::read(r1.join(file)).unwrap(),
            std::fs::read(r2.join(file)).unwrap(),
            "{file} differs between reruns"
        );
    }
}

#[test]
fn train_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY_CONFIG);
    let run = dir.path().join("run");
    let out = lpunit(&["train", "--config", p(&cfg), "--out", p(&run), "--epochs", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&run.join("report.json"));
    assert_eq!(report["epochs"].as_array().unwrap().len(), 1);
    assert_eq!(report["best_epoch"], 0);
    assert_eq!(read_json(&run.join("config.json"))["train"]["epochs"], 0);
}

#[test]
fn invalid_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TOY_CONFIG.replace("\"momentum\": 0.9", "\"momentum\": \"high\""));
    let out = lpunit(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("run"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("train.momentum"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_io_error() {
    let out = lpunit(&["train", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn search_writes_sorted_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    let text = TOY_CONFIG.replace(
        "\"valid_fraction\": 0.0}",
        "\"valid_fraction\": 0.25},\n  \"search\": {\"budget\": 3, \"space\": {\"train.learning_rate\": {\"kind\": \"log_uniform\", \"low\": 0.01, \"high\": 0.3}}}",
    );
    let cfg = write_config(dir.path(), &text);
    let run = dir.path().join("run");
    let out = lpunit(&["train", "--config", p(&cfg), "--out", p(&run), "--epochs", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let board = read_json(&run.join("leaderboard.json"));
    let board = board.as_array().unwrap();
    assert_eq!(board.len(), 3);
    let scores: Vec<f64> = board.iter().map(|e| e["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    let best_lr = board[0]["params"]["train.learning_rate"].as_f64().unwrap();
    assert_eq!(read_json(&run.join("config.json"))["train"]["learning_rate"].as_f64().unwrap(), best_lr);
}

#[test]
fn gradcheck_exit_codes() {
    let ok = lpunit(&["gradcheck"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let mutated = lpunit(&["gradcheck", "--mutate", "rho-grad"]);
    assert_eq!(code(&mutated), 1, "{}", stdout(&mutated));
    let empty = lpunit(&["gradcheck", "--layers", "0"]);
    assert_eq!(code(&empty), 0);
    assert_eq!(stdout(&empty).trim(), "max_rel_error 0");
}

fn save_model(dir: &Path, net: &Network) -> PathBuf {
    let path = dir.join("model.json");
    std::fs::write(&path, net.to_json().unwrap()).unwrap();
    path
}

#[test]
fn boundary_grid_and_constant_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let spec: NetworkSpec = serde_json::from_str(
        r#"{"input_dim": 2, "layers": [
            {"kind": "lp", "units": 3, "group": 2, "order": {"fixed": {"p": 2.0}}},
            {"kind": "dense", "out": 2, "activation": "identity"}]}"#,
    )
    .unwrap();
    let mut net = Network::new(spec, 0).unwrap();
    let mut theta = net.flatten();
    let n = theta.len();
    // readout weights (3×2) and bias (2) are the last 8 parameters
    theta[n - 8..n - 2].iter_mut().for_each(|w| *w = 0.0);
    theta[n - 2] = 1.0;
    theta[n - 1] = 0.0;
    net.unflatten(&theta).unwrap();
    let model = save_model(dir.path(), &net);

    let out_csv = dir.path().join("grid.csv");
    let out = lpunit(&["boundary", "--model", p(&model), "--out", p(&out_csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,y,predicted_label,u_0,u_1,u_2");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10000);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("0")));
}

#[test]
fn boundary_missing_model_is_io_error() {
    let out = lpunit(&["boundary", "--model", "/nonexistent/model.json", "--out", "/tmp/never.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn boundary_rejects_non_planar_model() {
    let dir = tempfile::tempdir().unwrap();
    let spec: NetworkSpec =
        serde_json::from_str(r#"{"input_dim": 3, "layers": [{"kind": "dense", "out": 2, "activation": "identity"}]}"#)
            .unwrap();
    let model = save_model(dir.path(), &Network::new(spec, 0).unwrap());
    let out = lpunit(&["boundary", "--model", p(&model), "--out", p(&dir.path().join("g.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn orders_text_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let text = TOY_CONFIG.replace("\"units\": 1", "\"units\": 4");
    let cfg = write_config(dir.path(), &text);
    let run = dir.path().join("run");
    assert_eq!(code(&lpunit(&["train", "--config", p(&cfg), "--out", p(&run), "--epochs", "0"])), 0);
    let json_path = dir.path().join("orders.json");
    let out = lpunit(&["orders", "--report", p(&run.join("report.json")), "--json", p(&json_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("TFD") && table.contains("2.04 ± 0.22"), "{table}");

    let doc = read_json(&json_path);
    let initial = doc["initial"]["histogram"].as_array().unwrap();
    assert_eq!(initial.len(), 1, "init near 3 occupies one bin");
    assert_eq!(initial[0]["center"], 3.0);
    assert_eq!(initial[0]["count"], 4);
    let learned_total: u64 = doc["learned"]["histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["count"].as_u64().unwrap())
        .sum();
    assert_eq!(learned_total, 4);
    let text_counts: Vec<&str> = table
        .lines()
        .filter(|l| l.trim_start().starts_with("3.00"))
        .map(|l| l.split_whitespace().nth(1).unwrap())
        .collect();
    assert_eq!(text_counts.first(), Some(&"4"));
}

#[test]
fn rnn_train_reports_nll_and_state_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"data": {"kind": "periodic", "roll": {"sequences": 12, "length": 10, "motifs": 2}, "seed": 1},
            "test_fraction": 0.25,
            "model": {"input_dim": 8, "state_dim": 4,
                      "transition": {"kind": "lp", "units": 4, "group": 2, "order": {"learned": {"initial_p": 2.0}}},
                      "output_units": 4, "output_dim": 8},
            "train": {"learning_rate": 0.05, "epochs": 3, "batch_size": 3, "clip_norm": 5.0, "valid_fraction": 0.0}}"#,
    );
    let run = dir.path().join("rnn");
    let out = lpunit(&["rnn-train", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&run.join("report.json"));
    assert!(report["test"]["loss"].as_f64().unwrap() > 0.0);
    let h = report["max_abs_state"].as_f64().unwrap();
    assert!(h > 0.0 && h < 1.0);
    let model = std::fs::read_to_string(run.join("model.json")).unwrap();
    assert!(lpunit::recurrent::DtRnnParams::from_json(&model).is_ok());
}

#[test]
fn multi_seed_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("ms.json");
    let out = lpunit(&[
        "multi-seed", "--models", "lp:2,rectifier:2", "--seeds", "1", "--n", "200", "--epochs", "5", "--lrs", "0.1",
        "--out", p(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = read_json(&out_path);
    let curves = doc["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0]["filters"], 4);
    assert_eq!(curves[1]["filters"], 2);
    let rate = curves[0]["failure_rate"].as_f64().unwrap();
    assert!(rate == 0.0 || rate == 1.0);
    assert!(curves[0]["orders"]["learned"]["count"] == 2);
    assert!(curves[1].get("orders").is_none());
}
