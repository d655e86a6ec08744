use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kid3::cli;
use kid3::fixture::FixtureLayout;

fn kid3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kid3")).args(args).output().expect("binary runs")
}

fn stderr_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

fn ok(output: Output) -> String {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    String::from_utf8(output.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 8] = ["--set", "fixture.n_train=36", "--set", "fixture.n_test=18", "--set", "train.epochs=1", "--set", "hidden=[16]"];

fn write_fixture(dir: &Path) -> String {
    let mut args = vec!["fixture", "--out", path(dir)];
    args.extend(SMALL);
    ok(kid3(&args));
    path(&dir.join(FixtureLayout::CONFIG)).to_string()
}

#[test]
fn end_to_end_pipeline() {
    let data = tempfile::tempdir().unwrap();
    let config = write_fixture(data.path());
    let work = tempfile::tempdir().unwrap();
    let out = path(work.path());

    let stdout = ok(kid3(&["preprocess", "--config", &config, "--out", out]));
    assert!(stdout.contains("train: 36 frames"), "{stdout}");
    assert!(stdout.contains("test: 18 frames"), "{stdout}");
    assert_eq!(
        fs::read(work.path().join(FixtureLayout::TRAIN_MANIFEST)).unwrap(),
        fs::read(data.path().join(FixtureLayout::TRAIN_MANIFEST)).unwrap()
    );

    let mut train = vec!["train", "--config", &config, "--out", out, "--methods", "M2", "--seed", "3"];
    train.extend(SMALL);
    let stdout = ok(kid3(&train));
    assert!(stdout.starts_with("M2 seed 3"), "{stdout}");
    for file in [cli::CHECKPOINT, cli::TRAINING_LOG, cli::CONFIG_ECHO] {
        assert!(work.path().join(file).is_file(), "{file}");
    }
    let echo = fs::read_to_string(work.path().join(cli::CONFIG_ECHO)).unwrap();
    assert!(echo.contains("hidden = [16]"), "{echo}");

    let ckpt = work.path().join(cli::CHECKPOINT);
    let stdout = ok(kid3(&["eval", "--config", &config, "--out", out, "--checkpoint", path(&ckpt)]));
    assert!(stdout.contains("accuracy"), "{stdout}");
    let report = work.path().join(cli::REPORT);
    let reports = kid3::harness::read_report(&report).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].seeds, [3]);

    ok(kid3(&["plot", "--out", out, "--report", path(&report)]));
    let svg = fs::read_to_string(work.path().join(cli::PLOT)).unwrap();
    assert_eq!(svg.matches("class=\"class-group\"").count(), 18);
}

#[test]
fn ablate_writes_report_and_comparison() {
    let data = tempfile::tempdir().unwrap();
    let config = write_fixture(data.path());
    let work = tempfile::tempdir().unwrap();
    let mut args = vec!["ablate", "--config", &config, "--out", path(work.path()), "--methods", "M1,M2", "--seeds", "2"];
    args.extend(SMALL);
    let stdout = ok(kid3(&args));
    assert!(stdout.contains("| M1 |") && stdout.contains("| M2 |"), "{stdout}");
    let reports = kid3::harness::read_report(&work.path().join(cli::REPORT)).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.seeds == [1, 2]));
    assert_eq!(fs::read_to_string(work.path().join(cli::COMPARISON)).unwrap(), stdout);
    assert!(work.path().join(cli::RUNS).is_file());
}

#[test]
fn overrides_are_echoed() {
    let work = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let config = write_fixture(data.path());
    ok(kid3(&["preprocess", "--config", &config, "--out", path(work.path()), "--set", "learning_rate=0.01"]));
    let echo = fs::read_to_string(work.path().join(cli::CONFIG_ECHO)).unwrap();
    assert!(echo.contains("learning_rate = 0.01"), "{echo}");
}

#[test]
fn unknown_config_key_exits_2() {
    let work = tempfile::tempdir().unwrap();
    let output = kid3(&["fixture", "--out", path(work.path()), "--set", "train.nonsense=1"]);
    assert_eq!(output.status.code(), Some(2));
    let json = stderr_json(&output);
    assert_eq!(json["error"], "config");
    assert_eq!(json["exit_code"], 2);
    assert!(json["message"].as_str().unwrap().contains("nonsense"));
}

#[test]
fn bad_usage_exits_2() {
    let output = kid3(&["train", "--methods", "M9"]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_json(&output)["error"], "usage");
    assert_eq!(kid3(&["frobnicate"]).status.code(), Some(2));
    assert!(ok(kid3(&["--help"])).contains("ablate"));
}

#[test]
fn unknown_label_exits_2_with_the_row() {
    let data = tempfile::tempdir().unwrap();
    let config = write_fixture(data.path());
    let csv = data.path().join(FixtureLayout::ANNOTATIONS);
    let mut text = fs::read_to_string(&csv).unwrap();
    let rows = text.lines().count();
    text.push_str("fx_v999,0,5,moonwalking\n");
    fs::write(&csv, text).unwrap();
    let output = kid3(&["preprocess", "--config", &config, "--out", path(data.path())]);
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains(&format!("line {}", rows + 1)), "{stdout}");
    assert!(stdout.contains("moonwalking"), "{stdout}");
    assert_eq!(stderr_json(&output)["error"], "annotations");
}

#[test]
fn missing_frames_dir_exits_1() {
    let data = tempfile::tempdir().unwrap();
    let config = write_fixture(data.path());
    fs::remove_dir(data.path().join(FixtureLayout::FRAMES)).unwrap();
    let output = kid3(&["preprocess", "--config", &config, "--out", path(data.path())]);
    assert_eq!(output.status.code(), Some(1));
    let json = stderr_json(&output);
    assert_eq!(json["error"], "io");
    assert!(json["message"].as_str().unwrap().contains(FixtureLayout::FRAMES));
}

#[test]
fn in_process_entry_point() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    assert_eq!(cli::main_with(["kid3", "plot", "--report", "/nonexistent/report.json"], &mut out, &mut err), 1);
    let err = String::from_utf8(err).unwrap();
    assert!(err.contains("\"exit_code\":1"), "{err}");
}
