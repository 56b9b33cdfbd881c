//! End-to-end tests of the `cleanstream` binary: artifact layout, exit
//! codes, override precedence, grid isolation, and report aggregation.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cleanstream"))
}

/// Flat config for a millisecond-scale synthetic run.
const TINY_TOML: &str = "\
n_experiences = 2
rows_per_experience = 120
n_features = 3
scale_jump_at = 1
scale_factor = 10.0
hidden_layers = [8]
dropout = 0.0
epochs = 2
batch_size = 32
learning_rate = 1e-2
";

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_TOML).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_artifacts_under_the_output_root_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    // untouched defaults: output_dir "results", name normalizer-strategy-seed
    let run_dir = tmp.path().join("results/clean-finetune-seed0");
    assert!(run_dir.join("clean-finetune-seed0.csv").exists());
    assert!(run_dir.join("clean-finetune-seed0.json").exists());
    assert!(stdout(&out).contains("final average accuracy"));
}

#[test]
fn set_overrides_win_over_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let out = bin()
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "epochs=3",
            "--set",
            "normalizer=local",
        ])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let json = tmp
        .path()
        .join("results/local-finetune-seed0/local-finetune-seed0.json");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(summary["config"]["epochs"], 3);
    assert_eq!(summary["config"]["normalizer"], "local");
    // file-sourced value survives alongside the overrides
    assert_eq!(summary["config"]["rows_per_experience"], 120);
}

#[test]
fn repeated_runs_emit_bit_identical_metric_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let mut csvs = Vec::new();
    for root in ["a", "b"] {
        let out = bin()
            .args(["run", "--config", cfg.to_str().unwrap()])
            .env("CLEANSTREAM_OUT_ROOT", tmp.path().join(root))
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        let path = tmp
            .path()
            .join(root)
            .join("results/clean-finetune-seed0/clean-finetune-seed0.csv");
        csvs.push(std::fs::read(path).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn invalid_and_unknown_fields_fail_with_the_field_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());

    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--set", "epochs=0"])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("epochs"), "stderr: {}", stderr(&out));

    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--set", "epoch=5"])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("epoch"), "stderr: {}", stderr(&out));
}

#[test]
fn grid_expands_axes_and_emits_a_comparison_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let out = bin()
        .args([
            "grid",
            "--config",
            cfg.to_str().unwrap(),
            "--vary",
            "normalizer=local,clean",
            "--vary",
            "seed=0,1",
        ])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let root = tmp.path().join("results");
    for (i, name) in [
        "local-finetune-seed0",
        "local-finetune-seed1",
        "clean-finetune-seed0",
        "clean-finetune-seed1",
    ]
    .iter()
    .enumerate()
    {
        let stem = format!("run{i:03}-{name}");
        let dir = root.join(&stem);
        assert!(dir.join(format!("{stem}.csv")).exists(), "{stem}");
        assert!(dir.join(format!("{stem}.json")).exists(), "{stem}");
    }

    let table = std::fs::read_to_string(root.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].starts_with("clean,finetune,2,0,"), "{table}");
    assert!(lines[2].starts_with("local,finetune,2,0,"), "{table}");
}

#[test]
fn one_failing_grid_cell_is_reported_without_aborting_the_rest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let out = bin()
        .args([
            "grid",
            "--config",
            cfg.to_str().unwrap(),
            "--vary",
            "dropout=0.0,2.0",
        ])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("dropout"), "stderr: {}", stderr(&out));

    // the healthy cell still ran and the table records one failure
    let root = tmp.path().join("results");
    assert!(root
        .join("run000-clean-finetune-seed0/run000-clean-finetune-seed0.csv")
        .exists());
    let table = std::fs::read_to_string(root.join("comparison.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("clean,finetune,1,1,")), "{table}");
}

#[test]
fn report_aggregates_summaries_from_a_results_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let out = bin()
        .args([
            "grid",
            "--config",
            cfg.to_str().unwrap(),
            "--vary",
            "seed=0,1",
        ])
        .env("CLEANSTREAM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let root = tmp.path().join("results");
    let table_out = tmp.path().join("report/table.csv");
    let out = bin()
        .args([
            "report",
            root.to_str().unwrap(),
            "--out",
            table_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("2 run summaries"));

    // the report over the grid's own tree reproduces its comparison table
    let grid_table = std::fs::read_to_string(root.join("comparison.csv")).unwrap();
    let report_table = std::fs::read_to_string(&table_out).unwrap();
    assert_eq!(grid_table, report_table);
}

#[test]
fn report_on_an_empty_tree_fails_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("report")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("no run summaries"),
        "stderr: {}",
        stderr(&out)
    );
}
