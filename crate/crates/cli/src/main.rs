//! `lawforge`: serve sessions, evaluate runs, replay logs, validate worlds, render reports.
//!
//! Exit codes: 0 success, 1 failures present (evaluation errors, divergent
//! replay, invalid worlds), 2 usage error.

mod eval;
mod plots;
mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lawforge_core::engine::read_log;
use lawforge_core::evaluation::{aggregate, builtin_rubric, render_table, CellResult};
use lawforge_core::forcelaws::catalog::catalog;
use lawforge_core::protocol::{verify_log, FinalSubmission, SessionRecord};
use lawforge_core::reference_runner::{serve as serve_runner, truth_law, RunnerMode};
use lawforge_core::types::validate_world;
use lawforge_core::worldfile::{self, search_dirs};

pub const EXIT_FAILURES: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "lawforge", version, about = "Physics-law discovery benchmark engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host one agent session over framed JSON on stdio or a TCP socket.
    Serve(serve::ServeArgs),
    /// Evaluate every (world, seed) cell of a run manifest.
    Eval(eval::EvalArgs),
    /// Re-simulate a session log and check it against its record.
    Replay {
        /// Session directory holding log.csv and session.json.
        dir: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Check world files (or every resolvable world when no path is given).
    Validate {
        paths: Vec<PathBuf>,
        #[arg(long = "world-dir")]
        world_dirs: Vec<PathBuf>,
    },
    /// Aggregate one or more eval results files into a comparison table.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inspect or export the world catalog.
    Worlds {
        #[command(subcommand)]
        action: WorldsAction,
    },
    /// Write the ground-truth submission for a world (the world's own law).
    TruthSubmission {
        #[arg(long)]
        world: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "world-dir")]
        world_dirs: Vec<PathBuf>,
    },
    /// Run a reference runner on stdin/stdout (see lawforge-runner).
    #[command(hide = true)]
    Runner {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

#[derive(Subcommand)]
enum WorldsAction {
    List {
        #[arg(long = "world-dir")]
        world_dirs: Vec<PathBuf>,
    },
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    Show {
        name: String,
        #[arg(long = "world-dir")]
        world_dirs: Vec<PathBuf>,
    },
}

/// A failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURES,
            message: message.into(),
        }
    }
}

pub type CmdResult = Result<ExitCode, Failure>;

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::failed(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
}

/// Command that starts this executable as a reference runner.
pub fn self_runner() -> String {
    std::env::current_exe()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| "lawforge".to_string())
}

fn replay(dir: Option<PathBuf>, log: Option<PathBuf>, record: Option<PathBuf>) -> CmdResult {
    let (log_path, record_path) = match (dir, log, record) {
        (Some(d), None, None) => (d.join("log.csv"), d.join("session.json")),
        (None, Some(l), Some(r)) => (l, r),
        _ => return Err(Failure::usage("give a session directory, or both --log and --record")),
    };
    let record: SessionRecord = read_json(&record_path)?;
    let log = read_log(&log_path).map_err(|e| Failure::failed(format!("{}: {e}", log_path.display())))?;
    let verdict = verify_log(&record.world, &record.experiments, &log);
    print!("{}", verdict.render());
    Ok(if verdict.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    })
}

fn world_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let entries = std::fs::read_dir(path).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

fn validate(paths: Vec<PathBuf>, world_dirs: Vec<PathBuf>) -> CmdResult {
    let mut bad = 0;
    if paths.is_empty() {
        let dirs = search_dirs(&world_dirs);
        for world in catalog() {
            match worldfile::resolve(&world.name, &dirs) {
                Ok(w) => {
                    let problems = validate_world(&w);
                    if problems.is_empty() {
                        println!("ok       {}", w.name);
                    } else {
                        bad += 1;
                        println!("invalid  {}: {}", w.name, problems.join("; "));
                    }
                }
                Err(e) => {
                    bad += 1;
                    println!("invalid  {}: {e}", world.name);
                }
            }
        }
    } else {
        for file in world_files(&paths)? {
            match worldfile::load(&file) {
                Ok(w) => println!("ok       {} ({})", file.display(), w.name),
                Err(e) => {
                    bad += 1;
                    println!("invalid  {e}");
                }
            }
        }
    }
    Ok(if bad == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    })
}

fn report(results: Vec<PathBuf>, out: Option<PathBuf>, seed: u64) -> CmdResult {
    let mut cells: Vec<CellResult> = Vec::new();
    for path in &results {
        let file: eval::ResultsFile = read_json(path)?;
        cells.extend(file.cells.iter().filter_map(eval::CellReport::cell_result));
    }
    let summary = aggregate(&cells, seed).map_err(|e| Failure::usage(e.to_string()))?;
    let mut table = render_table(&summary);
    table.push('\n');
    match out {
        Some(path) => write_file(&path, &table)?,
        None => print!("{table}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn worlds(action: WorldsAction) -> CmdResult {
    match action {
        WorldsAction::List { world_dirs } => {
            let dirs = search_dirs(&world_dirs);
            println!("{:<18} {:<22} {:>7} {:>6} {:>14}", "world", "topology", "visible", "agent", "reference_std");
            for world in catalog() {
                let w = worldfile::resolve(&world.name, &dirs).map_err(|e| Failure::failed(e.to_string()))?;
                println!(
                    "{:<18} {:<22} {:>7} {:>6} {:>14.4}",
                    w.name,
                    w.topology.as_str(),
                    w.visible_count,
                    w.agent_slots,
                    w.noise.reference_std
                );
            }
        }
        WorldsAction::Export { out } => {
            let written = worldfile::export_catalog(&out).map_err(|e| Failure::failed(e.to_string()))?;
            for path in written {
                println!("{}", path.display());
            }
        }
        WorldsAction::Show { name, world_dirs } => {
            let w = worldfile::resolve(&name, &search_dirs(&world_dirs)).map_err(|e| Failure::usage(e.to_string()))?;
            print!("{}", worldfile::to_toml(&w));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn truth_submission(world: String, out: PathBuf, world_dirs: Vec<PathBuf>) -> CmdResult {
    let w = worldfile::resolve(&world, &search_dirs(&world_dirs)).map_err(|e| Failure::usage(e.to_string()))?;
    let mut law = truth_law(&w, &self_runner());
    law.package.command.insert(1, "runner".to_string());
    let explanation = builtin_rubric(&w.name)
        .map(|r| r.ground_truth)
        .unwrap_or_else(|| format!("The dynamics of world '{}'.", w.name));
    let submission = FinalSubmission { explanation, law };
    let mut text = serde_json::to_string_pretty(&submission).expect("submission serializes");
    text.push('\n');
    write_file(&out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn runner(args: Vec<String>) -> CmdResult {
    let mode = RunnerMode::from_args(&args).map_err(Failure::usage)?;
    serve_runner(&mode, std::io::stdin().lock(), std::io::stdout().lock())
        .map_err(|e| Failure::failed(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => serve::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Replay { dir, log, record } => replay(dir, log, record),
        Command::Validate { paths, world_dirs } => validate(paths, world_dirs),
        Command::Report { results, out, seed } => report(results, out, seed),
        Command::Worlds { action } => worlds(action),
        Command::TruthSubmission { world, out, world_dirs } => truth_submission(world, out, world_dirs),
        Command::Runner { args } => runner(args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("lawforge: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
