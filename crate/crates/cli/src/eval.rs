//! `lawforge eval`: score every (world, seed) cell of a run manifest.
//!
//! Cells live at `<runs_dir>/<world>/seed-<seed>/` and hold the files written by
//! `lawforge serve`: `session.json`, `log.csv` and `submission.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::Args;
use serde::{Deserialize, Serialize};

use lawforge_core::engine::{read_log, ObservedExperiment};
use lawforge_core::evaluation::{
    aggregate, evaluate_with_judge, find_rubric, render_table, AggregateReport, CellResult, HttpJudge,
    JudgeClient, WorldResult,
};
use lawforge_core::lawrunner::{FitSettings, LawEvaluator, ProcessRunner, RunnerLimits, SystemClock};
use lawforge_core::protocol::{FailingEvaluator, FinalSubmission, Mode, SessionRecord, DEFAULT_ROUND_BUDGET};
use lawforge_core::textfmt::{format_g, nonfinite};
use lawforge_core::types::NoiseMode;
use lawforge_core::worldfile::{resolve, search_dirs};

use crate::plots::{heatmap_svg, violin_svg};
use crate::{read_json, write_file, CmdResult, Failure, EXIT_FAILURES};

#[derive(Args)]
pub struct EvalArgs {
    /// Run manifest (TOML).
    pub manifest: PathBuf,
    /// Score cells without a submission as failed attempts instead of aborting.
    #[arg(long)]
    pub allow_missing: bool,
    /// Override the manifest's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_rounds() -> usize {
    DEFAULT_ROUND_BUDGET
}
fn default_mode() -> Mode {
    Mode::Guided
}
fn default_runs() -> PathBuf {
    PathBuf::from("runs")
}
fn default_output() -> PathBuf {
    PathBuf::from("eval")
}
fn default_budget() -> f64 {
    180.0
}

/// One model's batch of runs. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub model: String,
    pub worlds: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_rounds")]
    pub round_budget: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub noise_level: Option<f64>,
    #[serde(default)]
    pub noise_mode: Option<NoiseMode>,
    #[serde(default = "default_runs")]
    pub runs_dir: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rubric_dir: Option<PathBuf>,
    #[serde(default)]
    pub world_dirs: Vec<PathBuf>,
    #[serde(default = "default_budget")]
    pub fit_budget_seconds: f64,
    /// Seed for bootstrap and pass@k resampling.
    #[serde(default)]
    pub stats_seed: u64,
}

impl RunManifest {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.model.trim().is_empty() {
            out.push("model label must not be empty".to_string());
        }
        if self.worlds.is_empty() {
            out.push("manifest lists no worlds".to_string());
        }
        if self.seeds.is_empty() {
            out.push("manifest lists no seeds".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                out.push(format!("seed {s} is listed twice"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in &self.worlds {
            if !seen.insert(w) {
                out.push(format!("world '{w}' is listed twice"));
            }
        }
        if self.round_budget == 0 {
            out.push("round_budget must be positive".to_string());
        }
        if !(self.fit_budget_seconds > 0.0) {
            out.push("fit_budget_seconds must be positive".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Missing,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: String,
    pub world: String,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<WorldResult>,
}

impl CellReport {
    /// The cell as an aggregation input; missing and failed cells count as
    /// failed attempts with infinite error.
    pub fn cell_result(&self) -> Option<CellResult> {
        Some(match &self.result {
            Some(r) => CellResult {
                model: self.model.clone(),
                world: self.world.clone(),
                seed: self.seed,
                norm_mse: r.norm_mse,
                explanation_score: r.explanation_score,
                passed: r.passed,
            },
            None => CellResult {
                model: self.model.clone(),
                world: self.world.clone(),
                seed: self.seed,
                norm_mse: f64::INFINITY,
                explanation_score: None,
                passed: false,
            },
        })
    }

    fn has_failures(&self) -> bool {
        self.status != CellStatus::Ok
            || self
                .result
                .as_ref()
                .is_some_and(|r| r.cases.iter().any(|c| c.error.is_some()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub model: String,
    pub cells: Vec<CellReport>,
    pub aggregate: AggregateReport,
}

struct Context<'a> {
    manifest: &'a RunManifest,
    base: &'a Path,
    world_dirs: Vec<PathBuf>,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cell_dir(ctx: &Context, world: &str, seed: u64) -> PathBuf {
    resolve_path(ctx.base, &ctx.manifest.runs_dir)
        .join(world)
        .join(format!("seed-{seed}"))
}

fn load_record(ctx: &Context, world: &str, seed: u64, dir: &Path) -> Result<SessionRecord, String> {
    let record: SessionRecord = read_json(&dir.join("session.json")).map_err(|f| f.message)?;
    let m = ctx.manifest;
    let mut problems = Vec::new();
    if record.world.name != world {
        problems.push(format!("session is for world '{}'", record.world.name));
    }
    if record.seed != seed {
        problems.push(format!("session used seed {}", record.seed));
    }
    if record.round_budget != m.round_budget {
        problems.push(format!("session budget {} differs from manifest {}", record.round_budget, m.round_budget));
    }
    if record.mode != m.mode {
        problems.push(format!("session mode {:?} differs from manifest {:?}", record.mode, m.mode));
    }
    if m.noise_level.is_some_and(|l| l != record.world.noise.level) {
        problems.push(format!("session noise level {} differs from manifest", record.world.noise.level));
    }
    if m.noise_mode.is_some_and(|mode| mode != record.world.noise.mode) {
        problems.push("session noise mode differs from manifest".to_string());
    }
    if problems.is_empty() {
        Ok(record)
    } else {
        Err(problems.join("; "))
    }
}

fn evaluate_cell(ctx: &Context, world_name: &str, seed: u64) -> CellReport {
    let report = |status, error: Option<String>, result| CellReport {
        model: ctx.manifest.model.clone(),
        world: world_name.to_string(),
        seed,
        status,
        error,
        result,
    };
    let dir = cell_dir(ctx, world_name, seed);
    let submission_path = dir.join("submission.json");
    if !submission_path.is_file() {
        return report(CellStatus::Missing, Some(format!("no submission at {}", submission_path.display())), None);
    }
    let submission: FinalSubmission = match read_json(&submission_path) {
        Ok(s) => s,
        Err(f) => return report(CellStatus::Error, Some(f.message), None),
    };
    let record = match load_record(ctx, world_name, seed, &dir) {
        Ok(r) => r,
        Err(e) => return report(CellStatus::Error, Some(e), None),
    };
    let log = match read_log(&dir.join("log.csv")) {
        Ok(l) => l,
        Err(e) => return report(CellStatus::Error, Some(format!("log.csv: {e}")), None),
    };
    let observed = ObservedExperiment::collect(&log, &record.experiments);
    // Held-out suites come from the current world definition so that every
    // cell of a world is scored on the same cases.
    let world = match resolve(world_name, &ctx.world_dirs) {
        Ok(w) => w,
        Err(e) => return report(CellStatus::Error, Some(e.to_string()), None),
    };
    let mut evaluator: Box<dyn LawEvaluator> =
        match ProcessRunner::new(submission.law.package.clone(), RunnerLimits::default()) {
            Ok(r) => Box::new(r),
            Err(e) => Box::new(FailingEvaluator(e)),
        };
    let settings = FitSettings {
        budget: Duration::from_secs_f64(ctx.manifest.fit_budget_seconds),
        ..FitSettings::default()
    };
    let rubric_dir = ctx.manifest.rubric_dir.as_ref().map(|d| resolve_path(ctx.base, d));
    let rubric = match find_rubric(world_name, rubric_dir.as_deref()) {
        Ok(r) => r,
        Err(e) => return report(CellStatus::Error, Some(e.to_string()), None),
    };
    let mut http = HttpJudge::from_env();
    let judge = match (&rubric, http.as_mut()) {
        (Some(r), Some(client)) => Some((r, client as &mut dyn JudgeClient)),
        _ => None,
    };
    let result = evaluate_with_judge(
        &world,
        &submission,
        &observed,
        evaluator.as_mut(),
        &settings,
        &SystemClock::start(),
        judge,
    );
    report(CellStatus::Ok, None, Some(result))
}

fn run_cells(ctx: &Context, cells: &[(String, u64)], jobs: usize) -> Vec<CellReport> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellReport>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((world, seed)) = cells.get(i) else { break };
                let r = evaluate_cell(ctx, world, *seed);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell evaluated"))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format_g(x, 6)).unwrap_or_default()
}

fn heatmap_csv(cells: &[CellReport]) -> (String, BTreeMap<(String, String), Option<f64>>) {
    let mut groups: BTreeMap<(String, String), Vec<&CellReport>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.model.clone(), c.world.clone())).or_default().push(c);
    }
    let mut out = String::from("model,world,seeds,mean_explanation,pass_rate,mean_finite_norm_mse\n");
    let mut values = BTreeMap::new();
    for ((model, world), group) in &groups {
        let scores: Vec<f64> = group.iter().filter_map(|c| c.result.as_ref()?.explanation_score).collect();
        let mean_expl = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        let passes = group.iter().filter(|c| c.result.as_ref().is_some_and(|r| r.passed)).count();
        let pass_rate = passes as f64 / group.len() as f64;
        let finite: Vec<f64> = group
            .iter()
            .filter_map(|c| c.result.as_ref().map(|r| r.norm_mse))
            .filter(|v| v.is_finite())
            .collect();
        let mean_mse = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        out.push_str(&format!(
            "{model},{world},{},{},{},{}\n",
            group.len(),
            fmt_opt(mean_expl),
            format_g(pass_rate, 6),
            fmt_opt(mean_mse)
        ));
        values.insert((model.clone(), world.clone()), mean_expl.or(Some(pass_rate)));
    }
    (out, values)
}

fn violin_csv(cells: &[CellReport]) -> String {
    let mut out = String::from("model,world,seed,norm_mse,log10_norm_mse,explanation_score,passed\n");
    for c in cells {
        let (norm, expl, passed) = match &c.result {
            Some(r) => (r.norm_mse, r.explanation_score, r.passed),
            None => (f64::INFINITY, None, false),
        };
        let log = if norm > 0.0 { norm.log10() } else { f64::NEG_INFINITY };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.model,
            c.world,
            c.seed,
            format_g(norm, 6),
            format_g(log, 6),
            fmt_opt(expl),
            passed
        ));
    }
    out
}

fn report_markdown(manifest: &RunManifest, cells: &[CellReport], summary: &AggregateReport) -> String {
    let mut out = format!("# Evaluation: {}\n\n", manifest.model);
    out.push_str(&render_table(summary));
    out.push_str("\n\n## Cells\n");
    for c in cells {
        out.push_str(&format!("\n### {} / seed {}\n\n", c.world, c.seed));
        match (&c.result, &c.error) {
            (Some(r), _) => {
                out.push_str("```\n");
                out.push_str(&r.render());
                out.push_str("\n```\n");
            }
            (None, Some(e)) => out.push_str(&format!("{:?}: {e}\n", c.status)),
            (None, None) => out.push_str(&format!("{:?}\n", c.status)),
        }
    }
    out
}

/// Timing sidecar; the only output that changes between identical runs.
#[derive(Serialize)]
struct Metadata {
    started_unix: u64,
    finished_unix: u64,
    #[serde(with = "nonfinite")]
    wall_seconds: f64,
    cells: usize,
    jobs: usize,
}

pub fn run(args: EvalArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.manifest.display())))?;
    let manifest: RunManifest =
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", args.manifest.display())))?;
    let problems = manifest.violations();
    if !problems.is_empty() {
        return Err(Failure::usage(problems.join("; ")));
    }
    let base = args
        .manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let world_dirs: Vec<PathBuf> = manifest.world_dirs.iter().map(|d| resolve_path(&base, d)).collect();
    let ctx = Context {
        manifest: &manifest,
        base: &base,
        world_dirs: search_dirs(&world_dirs),
    };
    for w in &manifest.worlds {
        resolve(w, &ctx.world_dirs).map_err(|e| Failure::usage(e.to_string()))?;
    }
    let cells: Vec<(String, u64)> = manifest
        .worlds
        .iter()
        .flat_map(|w| {
            let mut seeds = manifest.seeds.clone();
            seeds.sort_unstable();
            seeds.into_iter().map(move |s| (w.clone(), s))
        })
        .collect();
    if !args.allow_missing {
        let missing: Vec<String> = cells
            .iter()
            .filter(|(w, s)| !cell_dir(&ctx, w, *s).join("submission.json").is_file())
            .map(|(w, s)| format!("{w}/seed-{s}"))
            .collect();
        if !missing.is_empty() {
            return Err(Failure::usage(format!(
                "missing submissions (pass --allow-missing to score them as failures): {}",
                missing.join(", ")
            )));
        }
    }

    let started = SystemTime::now();
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let mut reports = run_cells(&ctx, &cells, jobs);
    reports.sort_by(|a, b| (&a.world, a.seed).cmp(&(&b.world, b.seed)));

    let inputs: Vec<CellResult> = reports.iter().filter_map(CellReport::cell_result).collect();
    let summary = aggregate(&inputs, manifest.stats_seed).map_err(|e| Failure::failed(e.to_string()))?;
    let out_dir = args.out.clone().unwrap_or_else(|| resolve_path(&base, &manifest.output_dir));
    let results = ResultsFile {
        model: manifest.model.clone(),
        cells: reports.clone(),
        aggregate: summary.clone(),
    };
    let mut json = serde_json::to_string_pretty(&results).expect("results serialize");
    json.push('\n');
    write_file(&out_dir.join("results.json"), &json)?;
    write_file(&out_dir.join("report.md"), &report_markdown(&manifest, &reports, &summary))?;
    let (heatmap, values) = heatmap_csv(&reports);
    write_file(&out_dir.join("heatmap.csv"), &heatmap)?;
    write_file(&out_dir.join("violin.csv"), &violin_csv(&reports))?;
    write_file(&out_dir.join("heatmap.svg"), &heatmap_svg(&values))?;
    let mut spread: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &reports {
        let v = c.result.as_ref().map(|r| r.norm_mse).unwrap_or(f64::INFINITY);
        spread.entry(c.world.clone()).or_default().push(v);
    }
    write_file(&out_dir.join("violin.svg"), &violin_svg(&spread))?;

    let finished = SystemTime::now();
    let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = Metadata {
        started_unix: unix(started),
        finished_unix: unix(finished),
        wall_seconds: finished.duration_since(started).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        cells: reports.len(),
        jobs,
    };
    write_file(
        &out_dir.join("metadata.json"),
        &(serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"),
    )?;

    print!("{}", render_table(&summary));
    println!();
    let failures: Vec<&CellReport> = reports.iter().filter(|c| c.has_failures()).collect();
    for c in &failures {
        eprintln!(
            "lawforge: {}/seed-{}: {}",
            c.world,
            c.seed,
            c.error.clone().unwrap_or_else(|| "held-out rollout errors".to_string())
        );
    }
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    })
}
