//! Reference runner process: `lawforge-runner <mode> [options]`, one JSON request per stdin line.

use std::io::{stdin, stdout};
use std::process::ExitCode;

use lawforge_core::reference_runner::{serve, RunnerMode};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = match RunnerMode::from_args(&args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("lawforge-runner: {e}");
            eprintln!("usage: lawforge-runner <truth|echo|slow|bad-shape|crash|nonfinite|quadratic|error> [--world NAME] [--world-file PATH] [--seconds S]");
            return ExitCode::from(2);
        }
    };
    match serve(&mode, stdin().lock(), stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lawforge-runner: {e}");
            ExitCode::FAILURE
        }
    }
}
