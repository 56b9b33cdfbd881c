//! `cleanstream` — config-driven runner for continual-learning experiments
//! on tabular streams.
//!
//! Three subcommands:
//!
//! - `run`: execute one config and emit its metric CSV and JSON summary.
//! - `grid`: expand a base config across `--vary` axes, run every cell in
//!   isolation (one failure never aborts the rest), and emit a combined
//!   comparison table.
//! - `report`: scan result directories for run summaries and aggregate them
//!   into the same comparison table.
//!
//! All artifacts land under the config's `output_dir`, resolved against the
//! `CLEANSTREAM_OUT_ROOT` environment variable when it is set and the path
//! is relative. Exit status is zero only if every requested run completed.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cleanstream_core::harness::{
    aggregate_summaries, emit_results, run_experiment, write_comparison_csv, ComparisonRow,
    RunConfig, RunSummary, SUMMARY_FORMAT_VERSION,
};
use walkdir::WalkDir;

use config::{
    expand_grid, load_config, load_table, parse_set, parse_vary, resolve_output_dir,
    table_to_config, OUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(
    name = "cleanstream",
    version,
    about = "Continual-learning experiments on tabular streams",
    after_help = "Config files are flat TOML; every key of the documented schema is optional.\n\
                  Relative output directories resolve under $CLEANSTREAM_OUT_ROOT when set."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run(RunArgs),
    /// Run a grid of experiments and emit a comparison table.
    Grid(GridArgs),
    /// Aggregate existing run summaries into a comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML config file; omit to start from built-in defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct GridArgs {
    /// Flat TOML config file shared by every grid cell.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key in every cell (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Vary one key across values, e.g. --vary normalizer=global,clean
    /// (repeatable; axes combine as a cross product).
    #[arg(long = "vary", value_name = "KEY=V1,V2,...")]
    varies: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories to scan recursively for run summary JSON files.
    #[arg(required = true, value_name = "DIR")]
    dirs: Vec<PathBuf>,
    /// Also write the comparison table to this CSV file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn out_root() -> Option<String> {
    std::env::var(OUT_ROOT_ENV).ok()
}

/// Points the config's `output_dir` at its per-run directory
/// `<resolved root>/<run name>` and returns that directory.
fn enter_run_dir(cfg: &mut RunConfig) -> PathBuf {
    let root = resolve_output_dir(&cfg.output_dir, out_root().as_deref());
    let dir = root.join(cfg.resolved_run_name());
    cfg.output_dir = dir.display().to_string();
    dir
}

fn execute(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let log = run_experiment(cfg)?;
    let (csv_path, json_path) = emit_results(&log, dir)?;
    println!("  wrote {}", csv_path.display());
    println!("  wrote {}", json_path.display());
    Ok(RunSummary::from_log(&log)?)
}

fn print_headline(s: &RunSummary) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "  final average accuracy {:.4}  forgetting {}  auroc {}{}",
        s.final_average_accuracy,
        opt(s.final_average_forgetting),
        opt(s.final_average_auroc),
        if s.oracle_normalizer { "  [oracle]" } else { "" },
    );
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref(), &args.sets)?;
    let dir = enter_run_dir(&mut cfg);
    println!("run {}", cfg.resolved_run_name());
    let summary = execute(&cfg, &dir)?;
    print_headline(&summary);
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    let mut base = load_table(args.config.as_deref())?;
    for s in &args.sets {
        let (key, value) = parse_set(s)?;
        config::apply_override(&mut base, key, value)?;
    }
    let axes = args
        .varies
        .iter()
        .map(|v| parse_vary(v))
        .collect::<Result<Vec<_>>>()?;
    let cells = expand_grid(&base, &axes)?;

    let grid_root = resolve_output_dir(
        base.get("output_dir")
            .and_then(|v| v.as_str())
            .unwrap_or(""),
        out_root().as_deref(),
    );

    let mut summaries: Vec<RunSummary> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    let mut failure_lines: Vec<String> = Vec::new();
    for (idx, (label, table)) in cells.iter().enumerate() {
        // identify the cell for the table even if its config is invalid
        let normalizer = key_or_default(table, "normalizer", |c| c.normalizer.clone());
        let strategy = key_or_default(table, "strategy", |c| c.strategy.clone());
        let outcome = run_cell(idx, label, table.clone(), &grid_root, &mut summaries);
        if let Err(e) = outcome {
            let what = if label.is_empty() { "base config" } else { label };
            eprintln!("cell {idx} ({what}) failed: {e:#}");
            failure_lines.push(format!("cell {idx} ({what}): {e:#}"));
            failures.push((normalizer, strategy));
        }
    }

    let rows = aggregate_summaries(&summaries, &failures);
    std::fs::create_dir_all(&grid_root)
        .with_context(|| format!("cannot create {}", grid_root.display()))?;
    let table_path = grid_root.join("comparison.csv");
    write_comparison_csv(&rows, &table_path)?;
    print_table(&rows);
    println!("wrote {}", table_path.display());

    if !failure_lines.is_empty() {
        bail!(
            "{} of {} runs failed:\n  {}",
            failure_lines.len(),
            cells.len(),
            failure_lines.join("\n  ")
        );
    }
    Ok(())
}

fn key_or_default(table: &toml::Table, key: &str, pick: fn(&RunConfig) -> String) -> String {
    table
        .get(key)
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| pick(&RunConfig::default()))
}

fn run_cell(
    idx: usize,
    label: &str,
    table: toml::Table,
    grid_root: &Path,
    summaries: &mut Vec<RunSummary>,
) -> Result<()> {
    let mut cfg = table_to_config(table)?;
    cfg.run_name = format!("run{idx:03}-{}", cfg.resolved_run_name());
    let dir = grid_root.join(&cfg.run_name);
    cfg.output_dir = dir.display().to_string();
    if label.is_empty() {
        println!("run {}", cfg.run_name);
    } else {
        println!("run {} ({label})", cfg.run_name);
    }
    let summary = execute(&cfg, &dir)?;
    print_headline(&summary);
    summaries.push(summary);
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut summaries = Vec::new();
    let mut json_seen = 0usize;
    for dir in &args.dirs {
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.with_context(|| format!("cannot scan {}", dir.display()))?;
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                json_seen += 1;
                if let Ok(s) = RunSummary::read_from(path) {
                    if s.format_version == SUMMARY_FORMAT_VERSION {
                        summaries.push(s);
                    }
                }
            }
        }
    }
    if summaries.is_empty() {
        bail!(
            "no run summaries found under {} ({} JSON files examined)",
            args.dirs
                .iter()
                .map(|d| d.display().to_string())
                .collect::<Vec<_>>()
                .join(", "),
            json_seen
        );
    }
    println!("{} run summaries", summaries.len());
    let rows = aggregate_summaries(&summaries, &[]);
    print_table(&rows);
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        write_comparison_csv(&rows, out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn print_table(rows: &[ComparisonRow]) {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{:<14} {:<10} {:>9} {:>6} {:>9} {:>11} {:>7}",
        "normalizer", "strategy", "completed", "failed", "accuracy", "forgetting", "auroc"
    );
    for r in rows {
        println!(
            "{:<14} {:<10} {:>9} {:>6} {:>9} {:>11} {:>7}",
            r.normalizer,
            r.strategy,
            r.completed,
            r.failed,
            cell(r.final_average_accuracy),
            cell(r.final_average_forgetting),
            cell(r.final_average_auroc),
        );
    }
}
