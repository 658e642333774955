//! Built-in runners that speak the runner wire format.
//!
//! `truth` rolls scenarios forward with a world's own law, so it serves as the
//! ground-truth submission. The other modes misbehave on purpose and exist to
//! exercise the runner harness: wrong shapes, crashes, stalls, non-finite output.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Duration;

use serde_json::{json, Value};

use crate::engine::{assemble_bodies, WorldField};
use crate::integrators::integrate_to_times;
use crate::lawrunner::{
    CandidateLaw, LawPackage, ParamSpec, Prediction, RunnerRequest, Scenario, SCHEMA_VERSION,
};
use crate::types::WorldDefinition;
use crate::vec2::Vec2;
use crate::worldfile;

/// Law parameters a truth runner never exposes for fitting.
pub const FIXED_PARAMS: [&str; 1] = ["image_truncation"];

#[derive(Debug, Clone, PartialEq)]
pub enum RunnerMode {
    /// Integrate with `world`'s law, overriding law parameters named in the request.
    Truth(Box<WorldDefinition>),
    /// Every body stays at its initial position.
    Echo,
    /// Sleeps, then answers like [`RunnerMode::Quadratic`].
    Slow(Duration),
    /// Replies with one body too few.
    BadShape,
    /// Exits with status 3 on the first request.
    Crash,
    /// Replies with NaN coordinates, written the way Python's json module does.
    NonFinite,
    /// Every body sits at `(k, 0)` where `k` is the request's `k` parameter.
    Quadratic,
    /// Always answers `{"error": ...}`.
    Error,
}

impl RunnerMode {
    /// Parses `lawforge-runner` arguments: `<mode> [--world NAME] [--world-file PATH] [--seconds S]`.
    pub fn from_args(args: &[String]) -> Result<Self, String> {
        let mode = args.first().ok_or("missing runner mode")?;
        let mut world_name = None;
        let mut world_file = None;
        let mut seconds = 60.0;
        let mut rest = args[1..].iter();
        while let Some(flag) = rest.next() {
            let mut value = || rest.next().cloned().ok_or(format!("{flag} needs a value"));
            match flag.as_str() {
                "--world" => world_name = Some(value()?),
                "--world-file" => world_file = Some(value()?),
                "--seconds" => {
                    seconds = value()?
                        .parse::<f64>()
                        .map_err(|e| format!("--seconds: {e}"))?
                }
                other => return Err(format!("unknown argument '{other}'")),
            }
        }
        Ok(match mode.as_str() {
            "truth" => {
                let world = match (world_file, world_name) {
                    (Some(path), _) => worldfile::load(path.as_ref()).map_err(|e| e.to_string())?,
                    (None, Some(name)) => {
                        worldfile::resolve(&name, &worldfile::search_dirs(&[])).map_err(|e| e.to_string())?
                    }
                    (None, None) => return Err("truth mode needs --world or --world-file".into()),
                };
                RunnerMode::Truth(Box::new(world))
            }
            "echo" => RunnerMode::Echo,
            "slow" => RunnerMode::Slow(Duration::from_secs_f64(seconds.max(0.0))),
            "bad-shape" => RunnerMode::BadShape,
            "crash" => RunnerMode::Crash,
            "nonfinite" => RunnerMode::NonFinite,
            "quadratic" => RunnerMode::Quadratic,
            "error" => RunnerMode::Error,
            other => return Err(format!("unknown runner mode '{other}'")),
        })
    }
}

fn truth_prediction(
    world: &WorldDefinition,
    scenario: &Scenario,
    params: &BTreeMap<String, f64>,
) -> Result<Prediction, String> {
    let mut world = world.clone();
    for (name, value) in params {
        if FIXED_PARAMS.contains(&name.as_str()) {
            continue;
        }
        if let Some(slot) = world.law.params.get_mut(name) {
            *slot = *value;
        }
    }
    let assembly = assemble_bodies(&world, &scenario.bodies);
    let field = WorldField::new(&world, assembly.pinned.clone()).map_err(|e| e.to_string())?;
    let mut accel = |s: &[_], t: f64, out: &mut [Vec2]| field.fill(s, t, out);
    let times = scenario.absolute_times();
    let later: Vec<f64> = times.iter().copied().filter(|t| *t > scenario.start_time).collect();
    let mut snapshots = integrate_to_times(
        &assembly.particles,
        &mut accel,
        &later,
        &world.integrator_choice(),
        scenario.start_time,
    )
    .map_err(|e| e.to_string())?
    .into_iter();
    let positions = times
        .iter()
        .map(|t| {
            let snap = if *t > scenario.start_time {
                snapshots.next().expect("one snapshot per later time")
            } else {
                assembly.particles.clone()
            };
            assembly.exposed.iter().map(|&i| snap[i].position).collect()
        })
        .collect();
    Ok(Prediction {
        positions,
        velocities: None,
    })
}

fn constant_grid(scenario: &Scenario, at: impl Fn(usize) -> Vec2, bodies: usize) -> Prediction {
    let rows = scenario.absolute_times().len();
    Prediction {
        positions: vec![(0..bodies).map(&at).collect(); rows],
        velocities: None,
    }
}

/// Reply line (without newline) for one request line.
pub fn respond(mode: &RunnerMode, line: &str) -> String {
    let request: RunnerRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return json!({ "error": format!("bad request: {e}") }).to_string(),
    };
    if request.schema_version != SCHEMA_VERSION {
        return json!({ "error": format!("unsupported schema_version {}", request.schema_version) })
            .to_string();
    }
    let scenario = &request.scenario;
    let bodies = scenario.bodies.len();
    let prediction = match mode {
        RunnerMode::Truth(world) => match truth_prediction(world, scenario, &request.params) {
            Ok(p) => p,
            Err(e) => return json!({ "error": e }).to_string(),
        },
        RunnerMode::Echo => constant_grid(scenario, |b| scenario.bodies[b].position, bodies),
        RunnerMode::BadShape => constant_grid(scenario, |_| Vec2::ZERO, bodies.saturating_sub(1)),
        RunnerMode::Quadratic | RunnerMode::Slow(_) => {
            let k = request.params.get("k").copied().unwrap_or(0.0);
            constant_grid(scenario, |_| Vec2::new(k, 0.0), bodies)
        }
        RunnerMode::NonFinite => {
            let rows = scenario.absolute_times().len();
            let row = vec!["[NaN, NaN]"; bodies].join(", ");
            return if scenario.duration.is_some() {
                format!("{{\"positions\": [{row}]}}")
            } else {
                format!("{{\"positions\": [{}]}}", vec![format!("[{row}]"); rows].join(", "))
            };
        }
        RunnerMode::Error => return json!({ "error": "this runner always fails" }).to_string(),
        RunnerMode::Crash => std::process::exit(3),
    };
    let reply: Value = prediction.to_reply(scenario);
    reply.to_string()
}

/// Serves requests until end of input.
pub fn serve<R: BufRead, W: Write>(mode: &RunnerMode, input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let RunnerMode::Slow(delay) = mode {
            std::thread::sleep(*delay);
        }
        writeln!(output, "{}", respond(mode, &line))?;
        output.flush()?;
    }
    Ok(())
}

/// Candidate law that runs `runner_binary` in `mode_args` with no free parameters.
pub fn runner_package(runner_binary: &str, mode_args: &[&str]) -> LawPackage {
    let mut command = vec![runner_binary.to_string()];
    command.extend(mode_args.iter().map(|s| s.to_string()));
    LawPackage {
        files: BTreeMap::new(),
        command,
    }
}

/// The ground-truth submission for `world`: its own law with the world file
/// shipped inside the package and every parameter fixed at its true value.
pub fn truth_law(world: &WorldDefinition, runner_binary: &str) -> CandidateLaw {
    let mut package = runner_package(runner_binary, &["truth", "--world-file", "world.toml"]);
    package
        .files
        .insert("world.toml".to_string(), worldfile::to_toml(world));
    CandidateLaw {
        package,
        param_specs: Vec::new(),
        docstring: format!("reference dynamics of world '{}'", world.name),
    }
}

/// [`truth_law`] with every fittable law parameter declared at its true value,
/// bounded by a tenth and ten times that value.
pub fn truth_law_fittable(world: &WorldDefinition, runner_binary: &str) -> CandidateLaw {
    let mut law = truth_law(world, runner_binary);
    law.param_specs = world
        .law
        .params
        .iter()
        .filter(|(name, _)| !FIXED_PARAMS.contains(&name.as_str()))
        .map(|(name, &value)| {
            let (lo, hi) = if value > 0.0 {
                (value / 10.0, value * 10.0)
            } else if value < 0.0 {
                (value * 10.0, value / 10.0)
            } else {
                (-1.0, 1.0)
            };
            ParamSpec::new(name, value, lo, hi)
        })
        .collect();
    law
}
