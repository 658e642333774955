//! The round-budgeted session state machine an agent talks to.
//!
//! A session starts with a prompt. Each accepted experiment or fit request uses
//! one round; malformed messages are rejected without cost. Finalizing is always
//! allowed once and locks the session.

mod parse;
mod prompt;
mod randomized;
mod record;
mod wire;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    inject_noise, noise_seed, run_experiment, ExperimentSpec, LogError, ObservedExperiment,
    TrajectoryLog,
};
use crate::lawrunner::{
    fit_parameters, CandidateLaw, Clock, FitReport, FitSettings, LawEvaluator, Prediction,
    ProcessRunner, RunnerError, RunnerLimits, Scenario, SystemClock,
};
use crate::types::WorldDefinition;

pub use parse::{experiment_fields, experiment_to_json, parse_experiment};
pub use prompt::{render_prompt, UNIVERSAL_PROMPT};
pub use randomized::{sample_random_experiment, Grid, RandomizedConfig};
pub use record::{
    transcript, verify_log, DivergentRow, ReplayVerdict, SessionRecord, RECORD_FORMAT_VERSION,
    REPLAY_SIGMA_BOUND,
};
pub use wire::{
    read_frame, write_frame, write_message, ClientMessage, DataRow, ServerMessage, MAX_FRAME_BYTES,
};

pub const DEFAULT_ROUND_BUDGET: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Guided,
    Randomized,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "guided" => Ok(Mode::Guided),
            "random" | "randomized" => Ok(Mode::Randomized),
            other => Err(format!("unknown mode '{other}' (expected guided or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSubmission {
    pub explanation: String,
    pub law: CandidateLaw,
}

#[derive(Debug)]
pub struct SessionState {
    pub world_name: String,
    pub round_budget: usize,
    pub rounds_used: usize,
    pub mode: Mode,
    pub log: TrajectoryLog,
    pub pending_fit_report: Option<String>,
    pub finalized: Option<FinalSubmission>,
    pub rng_seed: u64,
}

/// One agent action after parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// `None` asks the session to draw the experiment (randomized mode).
    RunExperiment(Option<ExperimentSpec>),
    RequestFit(CandidateLaw),
    Finalize(FinalSubmission),
}

/// Builds the evaluator used for one fit request.
pub type EvaluatorFactory = Box<dyn FnMut(&CandidateLaw) -> Result<Box<dyn LawEvaluator>, RunnerError> + Send>;

/// Spawns each candidate as a sandboxed process.
pub fn process_evaluator_factory(limits: RunnerLimits) -> EvaluatorFactory {
    Box::new(move |law: &CandidateLaw| {
        ProcessRunner::new(law.package.clone(), limits.clone())
            .map(|r| Box::new(r) as Box<dyn LawEvaluator>)
    })
}

/// Every call fails with the same error; stands in when a runner cannot start.
pub struct FailingEvaluator(pub RunnerError);

impl LawEvaluator for FailingEvaluator {
    fn evaluate(
        &mut self,
        _scenario: &Scenario,
        _params: &BTreeMap<String, f64>,
    ) -> Result<Prediction, RunnerError> {
        Err(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub seed: u64,
    pub round_budget: usize,
    pub mode: Mode,
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>, seed: u64) -> Self {
        Self {
            session_id: session_id.into(),
            seed,
            round_budget: DEFAULT_ROUND_BUDGET,
            mode: Mode::Guided,
        }
    }
}

pub struct Session {
    world: WorldDefinition,
    state: SessionState,
    specs: Vec<ExperimentSpec>,
    rng: ChaCha20Rng,
    evaluators: EvaluatorFactory,
    clock: Box<dyn Fn() -> Box<dyn Clock> + Send>,
    fit_settings: FitSettings,
    fit_reports: Vec<FitReport>,
}

fn randomized_stream_seed(seed: u64) -> u64 {
    noise_seed(seed, u32::MAX)
}

impl Session {
    /// A session whose log lives in memory only.
    pub fn new(world: WorldDefinition, config: SessionConfig, evaluators: EvaluatorFactory) -> Result<Self, String> {
        let log = TrajectoryLog::new(config.session_id.clone());
        Self::with_log(world, config, evaluators, log)
    }

    /// A session appending to `log` (typically a persistent one).
    pub fn with_log(
        world: WorldDefinition,
        config: SessionConfig,
        evaluators: EvaluatorFactory,
        log: TrajectoryLog,
    ) -> Result<Self, String> {
        if config.round_budget == 0 {
            return Err("round budget must be positive".to_string());
        }
        let state = SessionState {
            world_name: world.name.clone(),
            round_budget: config.round_budget,
            rounds_used: 0,
            mode: config.mode,
            log,
            pending_fit_report: None,
            finalized: None,
            rng_seed: config.seed,
        };
        Ok(Self {
            world,
            state,
            specs: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(randomized_stream_seed(config.seed)),
            evaluators,
            clock: Box::new(|| Box::new(SystemClock::start())),
            fit_settings: FitSettings::default(),
            fit_reports: Vec::new(),
        })
    }

    pub fn with_fit_settings(mut self, settings: FitSettings) -> Self {
        self.fit_settings = settings;
        self
    }

    pub fn with_clock(mut self, clock: Box<dyn Fn() -> Box<dyn Clock> + Send>) -> Self {
        self.clock = clock;
        self
    }

    pub fn world(&self) -> &WorldDefinition {
        &self.world
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    /// Specs of every logged experiment, in experiment-id order.
    pub fn specs(&self) -> &[ExperimentSpec] {
        &self.specs
    }

    pub fn fit_reports(&self) -> &[FitReport] {
        &self.fit_reports
    }

    pub fn observed(&self) -> Vec<ObservedExperiment> {
        ObservedExperiment::collect(&self.state.log, &self.specs)
    }

    pub fn is_finalized(&self) -> bool {
        self.state.finalized.is_some()
    }

    /// Renders the prompt for the current round and clears any delivered fit report.
    fn next_prompt(&mut self) -> ServerMessage {
        let text = render_prompt(&self.world, &self.state);
        self.state.pending_fit_report = None;
        ServerMessage::Prompt {
            text,
            round: self.state.rounds_used + 1,
            rounds_remaining: self.rounds_remaining(),
        }
    }

    pub fn rounds_remaining(&self) -> usize {
        self.state.round_budget - self.state.rounds_used
    }

    /// The first message of a session.
    pub fn opening(&mut self) -> ServerMessage {
        self.next_prompt()
    }

    /// Handles one raw inbound frame payload.
    pub fn handle_text(&mut self, text: &str) -> Result<Vec<ServerMessage>, LogError> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle_message(msg),
            Err(e) => Ok(vec![ServerMessage::error(
                "malformed_message",
                "message is not a valid experiment, fit_request or finalize object",
                vec![e.to_string()],
            )]),
        }
    }

    pub fn handle_message(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>, LogError> {
        let action = match msg {
            ClientMessage::Experiment { experiment } => {
                if self.state.mode == Mode::Randomized {
                    Action::RunExperiment(None)
                } else {
                    match parse_experiment(&experiment, &self.world) {
                        Ok(spec) => Action::RunExperiment(Some(spec)),
                        Err(problems) => {
                            return Ok(self.guard_finalized().unwrap_or_else(|| {
                                vec![ServerMessage::error(
                                    "invalid_experiment",
                                    "experiment rejected; no round was used",
                                    problems,
                                )]
                            }))
                        }
                    }
                }
            }
            ClientMessage::FitRequest { law } => Action::RequestFit(law),
            ClientMessage::Finalize { explanation, law } => Action::Finalize(FinalSubmission { explanation, law }),
        };
        self.advance(action)
    }

    fn guard_finalized(&self) -> Option<Vec<ServerMessage>> {
        self.is_finalized().then(|| {
            vec![ServerMessage::error(
                "session_finalized",
                "the session is finalized and accepts no further actions",
                vec![],
            )]
        })
    }

    /// Applies one action. Only log persistence failures are errors; everything
    /// the agent did wrong comes back as an `error` message.
    pub fn advance(&mut self, action: Action) -> Result<Vec<ServerMessage>, LogError> {
        if let Some(rejection) = self.guard_finalized() {
            return Ok(rejection);
        }
        match action {
            Action::Finalize(submission) => Ok(self.finalize(submission)),
            Action::RunExperiment(_) | Action::RequestFit(_) if self.rounds_remaining() == 0 => {
                Ok(vec![ServerMessage::error(
                    "budget_exhausted",
                    format!(
                        "all {} rounds are used; send a finalize message",
                        self.state.round_budget
                    ),
                    vec![],
                )])
            }
            Action::RunExperiment(spec) => self.experiment(spec),
            Action::RequestFit(law) => Ok(self.fit(law)),
        }
    }

    fn experiment(&mut self, spec: Option<ExperimentSpec>) -> Result<Vec<ServerMessage>, LogError> {
        let spec = match spec {
            Some(spec) if self.state.mode == Mode::Guided => spec,
            _ => sample_random_experiment(&self.world, &self.world.randomized, &mut self.rng),
        };
        let problems = spec.violations(&self.world);
        if !problems.is_empty() {
            return Ok(vec![ServerMessage::error(
                "invalid_experiment",
                "experiment rejected; no round was used",
                problems,
            )]);
        }
        self.state.rounds_used += 1;
        let id = self.state.log.next_experiment_id();
        let mut out = Vec::with_capacity(2);
        match run_experiment(&self.world, &spec, id) {
            Ok(clean) => {
                let observed = inject_noise(&clean, &self.world.noise, noise_seed(self.state.rng_seed, id));
                self.state.log.append(&observed)?;
                self.specs.push(spec.clone());
                out.push(ServerMessage::Data {
                    experiment_id: id,
                    experiment: experiment_to_json(&spec),
                    rows: observed
                        .iter()
                        .map(|s| DataRow {
                            particle_index: s.particle_index,
                            time: s.time,
                            position: s.position,
                            velocity: s.velocity,
                        })
                        .collect(),
                });
            }
            Err(e) => out.push(ServerMessage::error(
                "experiment_failed",
                format!("the experiment could not be completed and used a round: {e}"),
                vec![],
            )),
        }
        out.push(self.next_prompt());
        Ok(out)
    }

    fn fit(&mut self, law: CandidateLaw) -> Vec<ServerMessage> {
        let problems = law.violations();
        if !problems.is_empty() {
            return vec![ServerMessage::error(
                "invalid_law",
                "fit request rejected; no round was used",
                problems,
            )];
        }
        self.state.rounds_used += 1;
        let report = self.run_fit(&law);
        let text = report.render();
        self.fit_reports.push(report.clone());
        self.state.pending_fit_report = Some(text.clone());
        vec![ServerMessage::FitReport { text, report }, self.next_prompt()]
    }

    /// Fits `law` against everything observed so far.
    pub fn run_fit(&mut self, law: &CandidateLaw) -> FitReport {
        let observed = self.observed();
        let clock = (self.clock)();
        match (self.evaluators)(law) {
            Ok(mut evaluator) => fit_parameters(
                law,
                evaluator.as_mut(),
                &self.world,
                &observed,
                &self.fit_settings,
                clock.as_ref(),
            ),
            Err(e) => fit_parameters(
                law,
                &mut FailingEvaluator(e),
                &self.world,
                &observed,
                &self.fit_settings,
                clock.as_ref(),
            ),
        }
    }

    fn finalize(&mut self, submission: FinalSubmission) -> Vec<ServerMessage> {
        let problems = submission.law.violations();
        if !problems.is_empty() {
            return vec![ServerMessage::error(
                "invalid_law",
                "final submission rejected; the session is still open",
                problems,
            )];
        }
        self.state.finalized = Some(submission);
        vec![ServerMessage::Finalize {
            text: format!(
                "Submission received after {} of {} rounds. The session is closed.",
                self.state.rounds_used, self.state.round_budget
            ),
        }]
    }
}

/// Numbers and words in `text` that would reveal hidden facts about `world`.
///
/// Hidden values are matched as whole numeric tokens, exactly. Values with fewer
/// than three significant digits are skipped because they cannot be told apart
/// from round counters and example numbers.
pub fn hidden_leaks(world: &WorldDefinition, text: &str) -> Vec<String> {
    let mut leaks = Vec::new();
    let lower = text.to_lowercase();
    for word in ["species", "repulsive", "hidden particle", "dark", "halo"] {
        if lower.contains(word) {
            leaks.push(format!("word '{word}'"));
        }
    }
    for kind in crate::forcelaws::LawKind::ALL {
        let name = kind.as_str();
        if lower.contains(name) {
            leaks.push(format!("law kind '{name}'"));
        }
    }
    let hidden: Vec<f64> = world
        .hidden_values()
        .into_iter()
        .filter(|v| significant_digits(*v) >= 3)
        .collect();
    for token in numeric_tokens(text) {
        if let Ok(v) = token.parse::<f64>() {
            if hidden.iter().any(|h| h.to_bits() == v.to_bits() || h.to_bits() == (-v).to_bits()) {
                leaks.push(format!("value {token}"));
            }
        }
    }
    leaks
}

fn significant_digits(v: f64) -> usize {
    let repr = format!("{:e}", v.abs());
    let mantissa = repr.split('e').next().unwrap_or("");
    mantissa.chars().filter(char::is_ascii_digit).count()
}

fn numeric_tokens(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || bytes[i] == b'.'
                    || bytes[i] == b'e'
                    || bytes[i] == b'E'
                    || ((bytes[i] == b'-' || bytes[i] == b'+') && matches!(bytes[i - 1], b'e' | b'E')))
            {
                i += 1;
            }
            tokens.push(text[start..i].trim_end_matches(['.', 'e', 'E']));
        } else {
            i += 1;
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_tokens_split_on_punctuation() {
        assert_eq!(
            numeric_tokens("[1.5, -2e-3] round 7."),
            vec!["1.5", "2e-3", "7"]
        );
    }

    #[test]
    fn significant_digit_count() {
        assert_eq!(significant_digits(0.05), 1);
        assert_eq!(significant_digits(7.96), 3);
        assert_eq!(significant_digits(50.0), 1);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("random".parse::<Mode>().unwrap(), Mode::Randomized);
        assert!("other".parse::<Mode>().is_err());
    }
}
