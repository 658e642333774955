//! `lawforge serve`: one session per invocation.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::Args;

use lawforge_core::engine::TrajectoryLog;
use lawforge_core::lawrunner::{FitSettings, RunnerLimits};
use lawforge_core::protocol::{
    process_evaluator_factory, read_frame, write_message, Mode, ServerMessage, Session, SessionConfig,
    SessionRecord, DEFAULT_ROUND_BUDGET,
};
use lawforge_core::types::NoiseMode;
use lawforge_core::worldfile::{resolve, search_dirs};

use crate::{write_file, CmdResult, Failure, EXIT_FAILURES};

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub world: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Round budget; must be positive.
    #[arg(long, default_value_t = DEFAULT_ROUND_BUDGET as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub rounds: u64,
    /// guided, or random for grid-sampled experiments.
    #[arg(long, default_value = "guided")]
    pub mode: Mode,
    /// Directory for log.csv, session.json and submission.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long = "world-dir")]
    pub world_dirs: Vec<PathBuf>,
    /// Listen on this TCP address for a single connection instead of using stdio.
    #[arg(long)]
    pub listen: Option<String>,
    /// Override the world's noise level (fraction of reference_std).
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Override the noise mode: none, position_only or position_and_velocity.
    #[arg(long, value_parser = parse_noise_mode)]
    pub noise_mode: Option<NoiseMode>,
    /// Wall-clock budget for each fit request, in seconds.
    #[arg(long, default_value_t = 180.0)]
    pub fit_budget: f64,
    /// Per-call runner timeout, in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub runner_timeout: f64,
}

pub fn parse_noise_mode(s: &str) -> Result<NoiseMode, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown noise mode '{s}' (none, position_only, position_and_velocity)"))
}

fn save_record(session: &Session, out: &Path) -> Result<(), Failure> {
    write_file(&out.join("session.json"), &SessionRecord::from_session(session).to_json())
}

/// Drives `session` until it is finalized or the input ends. Returns whether it was finalized.
pub fn drive<R: BufRead, W: Write>(session: &mut Session, input: &mut R, output: &mut W, out: &Path) -> Result<bool, Failure> {
    let io = |e: std::io::Error| Failure::failed(format!("session stream: {e}"));
    write_message(output, &session.opening()).map_err(io)?;
    loop {
        let frame = match read_frame(input) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                // A broken frame header leaves no way to resynchronize.
                let msg = ServerMessage::error("malformed_message", format!("unreadable frame: {e}"), vec![]);
                let _ = write_message(output, &msg);
                save_record(session, out)?;
                return Err(Failure::failed(format!("unreadable frame: {e}")));
            }
        };
        let replies = session
            .handle_text(&frame)
            .map_err(|e| Failure::failed(format!("log write failed: {e}")))?;
        for msg in &replies {
            write_message(output, msg).map_err(io)?;
        }
        save_record(session, out)?;
        if session.is_finalized() {
            break;
        }
    }
    save_record(session, out)?;
    if let Some(submission) = &session.state().finalized {
        let mut text = serde_json::to_string_pretty(submission).expect("submission serializes");
        text.push('\n');
        write_file(&out.join("submission.json"), &text)?;
        return Ok(true);
    }
    Ok(false)
}

pub fn run(args: ServeArgs) -> CmdResult {
    let mut world = resolve(&args.world, &search_dirs(&args.world_dirs)).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(level) = args.noise_level {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Failure::usage("--noise-level must be a nonnegative number"));
        }
        world.noise.level = level;
    }
    if let Some(mode) = args.noise_mode {
        world.noise.mode = mode;
    }
    if !(args.fit_budget > 0.0 && args.runner_timeout > 0.0) {
        return Err(Failure::usage("--fit-budget and --runner-timeout must be positive"));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::failed(format!("{}: {e}", args.out.display())))?;
    let session_id = format!("{}-seed{}", world.name, args.seed);
    let log = TrajectoryLog::persistent(session_id.clone(), args.out.join("log.csv"))
        .map_err(|e| Failure::failed(e.to_string()))?;
    let mut config = SessionConfig::new(session_id, args.seed);
    config.round_budget = args.rounds as usize;
    config.mode = args.mode;
    let limits = RunnerLimits {
        call_timeout: Duration::from_secs_f64(args.runner_timeout),
        ..RunnerLimits::default()
    };
    let settings = FitSettings {
        budget: Duration::from_secs_f64(args.fit_budget),
        ..FitSettings::default()
    };
    let mut session = Session::with_log(world, config, process_evaluator_factory(limits), log)
        .map_err(Failure::usage)?
        .with_fit_settings(settings);

    let finalized = match &args.listen {
        None => {
            let stdin = std::io::stdin();
            let mut input = stdin.lock();
            let mut output = std::io::stdout().lock();
            drive(&mut session, &mut input, &mut output, &args.out)?
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| Failure::failed(format!("cannot listen on {addr}: {e}")))?;
            if let Ok(local) = listener.local_addr() {
                eprintln!("lawforge: listening on {local}");
            }
            let (stream, _) = listener.accept().map_err(|e| Failure::failed(e.to_string()))?;
            let mut output = stream.try_clone().map_err(|e| Failure::failed(e.to_string()))?;
            let mut input = BufReader::new(stream);
            drive(&mut session, &mut input, &mut output, &args.out)?
        }
    };
    if finalized {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("lawforge: input ended before the session was finalized");
        Ok(ExitCode::from(EXIT_FAILURES))
    }
}
