use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;
use gme_cli::{Cli, RunConfig, EXIT_CHECKPOINT, EXIT_SCHEMA, EXIT_VALIDATION};
use tempfile::TempDir;

fn gme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gme"))
        .args(args)
        .env_remove("GME_DATA_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_market(dir: &Path) {
    let out = gme(&["synth", "--preset", "synthetic-small", "--out", p(dir)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn quick_train(data: &Path, model: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        p(data),
        "--out",
        p(model),
        "--epochs",
        "1",
        "--hidden",
        "6",
        "--t-h",
        "2",
    ];
    args.extend_from_slice(extra);
    gme(&args)
}

#[test]
fn every_flag_has_help_text() {
    let cmd = Cli::command();
    for sub in cmd.get_subcommands() {
        assert!(
            sub.get_about().is_some(),
            "{} has no description",
            sub.get_name()
        );
        for arg in sub.get_arguments() {
            if matches!(arg.get_id().as_str(), "help" | "version") {
                continue;
            }
            assert!(
                arg.get_help().is_some(),
                "{} --{} has no help",
                sub.get_name(),
                arg.get_id()
            );
        }
    }
}

#[test]
fn help_lists_all_subcommands() {
    let out = gme(&["--help"]);
    assert!(out.status.success());
    for name in ["synth", "ingest", "build", "train", "eval", "predict"] {
        assert!(stdout(&out).contains(name));
    }
}

#[test]
fn synthesized_market_ingests_without_rejections() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let out = gme(&["ingest", "--data", p(dir.path())]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("rejected: 0"));
    assert!(dir.path().join("metadata.json").is_file());
}

#[test]
fn data_directory_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_gme"))
        .args(["ingest"])
        .env("GME_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn missing_data_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gme(&["ingest"])), i32::from(EXIT_VALIDATION));
    let out = gme(&["ingest", "--data", p(dir.path())]);
    assert_eq!(code(&out), i32::from(EXIT_VALIDATION));
}

#[test]
fn malformed_records_are_a_schema_error() {
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let path = dir.path().join("investments.jsonl");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{\"project_id\": \"nope\", \"timestamp\": 1, \"amount\": 1.0}\n");
    fs::write(&path, text).unwrap();
    let out = gme(&["ingest", "--data", p(dir.path())]);
    assert_eq!(code(&out), i32::from(EXIT_SCHEMA));
    let out = gme(&["ingest", "--data", p(dir.path()), "--allow-rejects"]);
    assert!(out.status.success());
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(RunConfig::parse("[train]\nepochs = 3\n").is_ok());
    assert!(RunConfig::parse("[train]\nepoks = 3\n").is_err());
    assert!(RunConfig::parse("colour = 1\n").is_err());
    let dir = TempDir::new().unwrap();
    small_market(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[train]\nepoks = 3\n").unwrap();
    let out = gme(&["ingest", "--data", p(dir.path()), "--config", p(&cfg)]);
    assert_eq!(code(&out), i32::from(EXIT_VALIDATION));
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = RunConfig::default();
    assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    small_market(&data);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[train]\nepochs = 3\nhidden = 6\nt_h = 2\n").unwrap();
    let model = dir.path().join("model");
    let out = gme(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--epochs",
        "2",
        "--out",
        p(&model),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let history = fs::read_to_string(model.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["train"]["epochs"], 2);
    assert_eq!(meta["config"]["train"]["hidden"], 6);
    assert_eq!(meta["loss_l_mode"], "next24h");
    assert_eq!(meta["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn model_directory_is_complete_and_scores() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    small_market(&data);
    assert!(quick_train(&data, &model, &[]).status.success());
    for f in [
        "checkpoint.bin",
        "model.json",
        "encoder.json",
        "history.jsonl",
        "metadata.json",
    ] {
        assert!(model.join(f).is_file(), "{f}");
    }
    let reports = dir.path().join("reports");
    let out = gme(&[
        "eval",
        "--data",
        p(&data),
        "--model",
        p(&model),
        "--out",
        p(&reports),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = fs::read_to_string(reports.join("reports.jsonl")).unwrap();
    let report: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(report["variant"], "model:full");
    assert!(
        report["weighted"]["mae"].as_f64().unwrap() <= report["weighted"]["rmse"].as_f64().unwrap()
    );
}

#[test]
fn incompatible_checkpoint_fails_without_reports() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    small_market(&data);
    assert!(quick_train(&data, &model, &[]).status.success());
    let ckpt = model.join("checkpoint.bin");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[8] = bytes[8].wrapping_add(1);
    fs::write(&ckpt, bytes).unwrap();
    let reports = dir.path().join("reports");
    let out = gme(&[
        "eval",
        "--data",
        p(&data),
        "--model",
        p(&model),
        "--out",
        p(&reports),
    ]);
    assert_eq!(code(&out), i32::from(EXIT_CHECKPOINT));
    assert!(!reports.exists());
}

#[test]
fn external_predictions_are_scored() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    small_market(&data);
    let projects = fs::read_to_string(data.join("projects.jsonl")).unwrap();
    let preds: String = projects
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!("{{\"project_id\":{},\"prediction\":0.5}}\n", v["id"])
        })
        .collect();
    let file = dir.path().join("preds.jsonl");
    fs::write(&file, preds).unwrap();
    let reports = dir.path().join("reports");
    let out = gme(&[
        "eval",
        "--data",
        p(&data),
        "--predictions",
        p(&file),
        "--t-h",
        "2",
        "--out",
        p(&reports),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(fs::read_to_string(reports.join("reports.txt"))
        .unwrap()
        .contains("external"));
}

#[test]
fn build_writes_one_dump_per_window() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    small_market(&data);
    let out_dir = dir.path().join("graphs");
    let out = gme(&[
        "build",
        "--data",
        p(&data),
        "--t-h",
        "3",
        "--pruning",
        "only-jf",
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(out_dir.join("graphs.jsonl")).unwrap();
    assert!(text.lines().count() > 1);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["tree_nodes"].is_array());
}

fn target_line(id: &str, launch: i64) -> String {
    format!(
        "{{\"id\":\"{id}\",\"launch_time\":{launch},\"category\":\"cat0\",\"creator_type\":\"individual\",\"currency\":\"USD\",\"duration_days\":20,\"goal\":2000.0,\"description\":\"solar kit\"}}\n"
    )
}

#[test]
fn predict_only_looks_forward_from_the_data_frontier() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    small_market(&data);
    assert!(quick_train(&data, &model, &[]).status.success());
    let newest = fs::read_to_string(data.join("investments.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["timestamp"]
                .as_i64()
                .unwrap()
        })
        .max()
        .unwrap();

    let early = dir.path().join("early.jsonl");
    fs::write(&early, target_line("late-comer", newest - 10)).unwrap();
    let out = gme(&[
        "predict",
        "--data",
        p(&data),
        "--model",
        p(&model),
        "--targets",
        p(&early),
    ]);
    assert_eq!(code(&out), i32::from(EXIT_VALIDATION));

    let future = dir.path().join("future.jsonl");
    let text = target_line("new-a", newest + 60) + &target_line("new-b", newest + 120);
    fs::write(&future, text).unwrap();
    let out = gme(&[
        "predict",
        "--data",
        p(&data),
        "--model",
        p(&model),
        "--targets",
        p(&future),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert!(lines
        .iter()
        .all(|v| v["prediction"].as_f64().unwrap() >= 0.0));
}
