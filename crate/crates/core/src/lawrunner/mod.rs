//! Candidate-law execution over the runner wire protocol and bounded parameter fitting.

mod fit;
mod neldermead;
mod process;
mod wire;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{
    fit_parameters, select_training, Clock, FitCaps, FitReport, FitSettings, ScaledClock,
    SystemClock, TrainingPoint,
};
pub use neldermead::{minimize_bounded, NelderMeadOptions, NelderMeadOutcome, StopReason};
pub use process::{ProcessRunner, RunnerLimits};
pub use wire::{
    parse_response, scenario_for, Prediction, RunnerRequest, Scenario, ScenarioHorizon,
    SCHEMA_VERSION,
};

/// Most free parameters a submitted law may declare.
pub const MAX_PARAMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub bounds: [f64; 2],
}

impl ParamSpec {
    pub fn new(name: &str, init: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            init,
            bounds: [lo, hi],
        }
    }
}

/// Files to materialize in the sandbox directory plus the command that starts
/// the runner. Relative `command[0]` paths resolve against the sandbox directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LawPackage {
    #[serde(default)]
    pub files: BTreeMap<String, String>,
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLaw {
    pub package: LawPackage,
    #[serde(default)]
    pub param_specs: Vec<ParamSpec>,
    #[serde(default)]
    pub docstring: String,
}

impl CandidateLaw {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.param_specs.len() > MAX_PARAMS {
            out.push(format!(
                "at most {MAX_PARAMS} fittable parameters are allowed, got {}",
                self.param_specs.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for p in &self.param_specs {
            if p.name.trim().is_empty() {
                out.push("parameter names must not be empty".to_string());
            }
            if !seen.insert(p.name.as_str()) {
                out.push(format!("parameter '{}' is declared twice", p.name));
            }
            let [lo, hi] = p.bounds;
            if lo.is_nan() || hi.is_nan() || !p.init.is_finite() {
                out.push(format!("parameter '{}' has non-numeric init or bounds", p.name));
            } else if !(lo <= p.init && p.init <= hi) {
                out.push(format!(
                    "parameter '{}' init {} lies outside bounds [{lo}, {hi}]",
                    p.name, p.init
                ));
            }
        }
        if self.package.command.is_empty() {
            out.push("package command must not be empty".to_string());
        }
        for name in self.package.files.keys() {
            let path = std::path::Path::new(name);
            if path.is_absolute()
                || path
                    .components()
                    .any(|c| !matches!(c, std::path::Component::Normal(_)))
            {
                out.push(format!("package file '{name}' must be a plain relative path"));
            }
        }
        out
    }

    pub fn initial_params(&self) -> BTreeMap<String, f64> {
        self.param_specs
            .iter()
            .map(|p| (p.name.clone(), p.init))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunnerError {
    #[error("runner failed to start: {0}")]
    Spawn(String),
    #[error("runner crashed: {0}")]
    Crash(String),
    #[error("runner exceeded the {0:.1}s call limit")]
    Timeout(f64),
    #[error("malformed runner reply: {0}")]
    Malformed(String),
    #[error("runner returned non-finite values")]
    NonFinite,
    #[error("runner output has shape {got}, expected {expected}")]
    Shape { expected: String, got: String },
    #[error("runner reported: {0}")]
    Reported(String),
    #[error("missing parameter values: {0}")]
    MissingParams(String),
}

/// Anything that can roll a candidate law forward for one scenario.
pub trait LawEvaluator {
    fn evaluate(
        &mut self,
        scenario: &Scenario,
        params: &BTreeMap<String, f64>,
    ) -> Result<Prediction, RunnerError>;
}

/// Sends one request and validates the reply; the runner is spawned on first use.
pub fn evaluate_candidate<E: LawEvaluator + ?Sized>(
    law: &CandidateLaw,
    evaluator: &mut E,
    scenario: &Scenario,
    params: &BTreeMap<String, f64>,
) -> Result<Prediction, RunnerError> {
    let missing: Vec<&str> = law
        .param_specs
        .iter()
        .filter(|p| !params.contains_key(&p.name))
        .map(|p| p.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(RunnerError::MissingParams(missing.join(", ")));
    }
    evaluator.evaluate(scenario, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(params: Vec<ParamSpec>) -> CandidateLaw {
        CandidateLaw {
            package: LawPackage {
                files: BTreeMap::new(),
                command: vec!["true".into()],
            },
            param_specs: params,
            docstring: String::new(),
        }
    }

    #[test]
    fn six_parameters_exceed_the_cap() {
        let specs = (0..6).map(|i| ParamSpec::new(&format!("a{i}"), 0.0, -1.0, 1.0)).collect();
        let v = law(specs).violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("at most 5"));
    }

    #[test]
    fn init_outside_bounds_and_duplicates() {
        let v = law(vec![
            ParamSpec::new("k", 2.0, 0.0, 1.0),
            ParamSpec::new("k", 0.5, 0.0, 1.0),
        ])
        .violations();
        assert!(v.iter().any(|m| m.contains("outside bounds")));
        assert!(v.iter().any(|m| m.contains("declared twice")));
    }

    #[test]
    fn package_paths_must_stay_inside_sandbox() {
        let mut l = law(vec![]);
        l.package.files.insert("../escape.py".into(), String::new());
        assert!(l.violations().iter().any(|m| m.contains("plain relative path")));
    }
}
