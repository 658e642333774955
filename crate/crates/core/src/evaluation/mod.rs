//! Scoring of finalized submissions and benchmark-level statistics.

mod aggregate;
mod judge;
mod passk;
mod rubrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_experiment, ExperimentSpec, ObservedExperiment};
use crate::lawrunner::{
    evaluate_candidate, fit_parameters, scenario_for, Clock, FitReport, FitSettings, LawEvaluator,
};
use crate::protocol::FinalSubmission;
use crate::textfmt::{format_g, nonfinite};
use crate::types::WorldDefinition;

pub use aggregate::{
    aggregate, bootstrap_geometric_mean, geometric_mean, render_table, AggregateReport, CellResult,
    ModelSummary, BOOTSTRAP_RESAMPLES,
};
pub use judge::{
    judge_prompt, parse_score, score_explanation, ExplanationScore, HttpJudge, JudgeClient,
    JudgeError, RubricBand, RubricFile, StubJudge, JUDGE_ATTEMPTS, JUDGE_URL_ENV,
};
pub use passk::{exact_pass_at_k, pass_at_k, PassAtK, PASS_AT_K_RESAMPLES};
pub use rubrics::{builtin_rubric, find_rubric};

/// Normalized MSE below this passes the trajectory axis.
pub const MSE_THRESHOLD: f64 = 0.1;
/// Explanation score at or above this passes the explanation axis.
pub const EXPLANATION_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reference variance must be positive, got {0}")]
    ZeroVariance(f64),
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutCase {
    pub label: String,
    pub experiment: ExperimentSpec,
}

/// Noise-free evaluation trajectories for one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutSuite {
    pub world_name: String,
    pub cases: Vec<HeldOutCase>,
    /// Squared-distance spread of the scored particles about their pooled mean position.
    pub reference_variance: f64,
}

pub fn normalize_mse(raw_mse: f64, reference_variance: f64) -> Result<f64, EvalError> {
    if !(reference_variance > 0.0) || !reference_variance.is_finite() {
        return Err(EvalError::ZeroVariance(reference_variance));
    }
    Ok(raw_mse / reference_variance)
}

/// Pooled position variance (`E|p − p̄|²`) of the scored particles over every case.
pub fn suite_variance(world: &WorldDefinition, cases: &[HeldOutCase]) -> Result<f64, String> {
    let scored = world.agent_exposed_indices();
    let mut points = Vec::new();
    for case in cases {
        let samples = run_experiment(world, &case.experiment, 0).map_err(|e| format!("case '{}': {e}", case.label))?;
        points.extend(
            samples
                .iter()
                .filter(|s| scored.contains(&s.particle_index))
                .map(|s| s.position),
        );
    }
    if points.is_empty() {
        return Err("held-out suite has no scored samples".to_string());
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(crate::vec2::Vec2::ZERO, |a, p| a + *p) * (1.0 / n);
    Ok(points.iter().map(|p| (*p - mean).norm_squared()).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub label: String,
    #[serde(with = "nonfinite")]
    pub mean_particle_mse: f64,
    #[serde(with = "nonfinite")]
    pub max_particle_mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldResult {
    pub world: String,
    #[serde(with = "nonfinite")]
    pub norm_mse: f64,
    #[serde(with = "nonfinite")]
    pub mean_particle_mse: f64,
    #[serde(with = "nonfinite")]
    pub max_particle_mse: f64,
    pub cases: Vec<CaseResult>,
    /// `raw / 10`; `None` while the judge has not scored the explanation.
    pub explanation_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_error: Option<String>,
    pub passed: bool,
    /// Set when `passed` reflects the MSE axis only.
    pub provisional: bool,
    pub fit_report: FitReport,
}

impl WorldResult {
    pub fn mse_passes(&self) -> bool {
        self.norm_mse < MSE_THRESHOLD
    }

    /// Applies an explanation score and recomputes the verdict.
    pub fn with_explanation(mut self, score: Option<&ExplanationScore>) -> Self {
        match score {
            Some(s) => {
                self.explanation_score = Some(s.normalized());
                self.judge_reasoning = Some(s.reasoning.clone());
                self.provisional = false;
            }
            None => {
                self.explanation_score = None;
                self.provisional = true;
            }
        }
        self.passed = verdict(self.norm_mse, self.explanation_score);
        self
    }

    pub fn render(&self) -> String {
        let mut lines: Vec<String> = self
            .fit_report
            .render()
            .lines()
            .map(|l| format!("  {l}"))
            .collect();
        for (i, case) in self.cases.iter().enumerate() {
            match &case.error {
                Some(err) => lines.push(format!("  Case {}: ERROR -- {err}", i + 1)),
                None => lines.push(format!(
                    "  Case {}: mean_particle_mse = {:.4}",
                    i + 1,
                    case.mean_particle_mse
                )),
            }
        }
        lines.push(String::new());
        lines.push(format!("  Mean particle MSE: {:.4}", self.mean_particle_mse));
        lines.push(format!("  Max  particle MSE: {:.4}", self.max_particle_mse));
        lines.push(format!("  Normalized MSE:    {}", format_g(self.norm_mse, 4)));
        lines.push(format!(
            "  Result: {}",
            if self.mse_passes() { "PASS" } else { "FAIL" }
        ));
        lines.push(String::new());
        match self.explanation_score {
            Some(score) => lines.push(format!(
                "  Explanation score: {score:.2}  (raw {:.1}/10)",
                score * 10.0
            )),
            None => lines.push(format!(
                "  Explanation score: pending{}",
                self.judge_error
                    .as_ref()
                    .map(|e| format!(" ({e})"))
                    .unwrap_or_default()
            )),
        }
        if let Some(reason) = &self.judge_reasoning {
            lines.push(format!("  Judge reasoning: {reason}"));
        }
        lines.push(format!(
            "  Verdict: {}{}",
            if self.passed { "PASS" } else { "FAIL" },
            if self.provisional { " (provisional, MSE only)" } else { "" }
        ));
        lines.join("\n")
    }
}

/// Pass rule: both axes when the explanation is scored, MSE alone otherwise.
pub fn verdict(norm_mse: f64, explanation_score: Option<f64>) -> bool {
    let mse_ok = norm_mse < MSE_THRESHOLD;
    match explanation_score {
        Some(s) => mse_ok && s >= EXPLANATION_THRESHOLD,
        None => mse_ok,
    }
}

/// Rolls the law out on one case and compares the scored particles with the truth.
fn score_case<E: LawEvaluator + ?Sized>(
    world: &WorldDefinition,
    submission: &FinalSubmission,
    evaluator: &mut E,
    params: &std::collections::BTreeMap<String, f64>,
    label: &str,
    spec: &ExperimentSpec,
) -> CaseResult {
    let failed = |error: String| CaseResult {
        label: label.to_string(),
        mean_particle_mse: f64::INFINITY,
        max_particle_mse: f64::INFINITY,
        error: Some(error),
    };
    let truth = match run_experiment(world, spec, 0) {
        Ok(t) => t,
        Err(e) => return failed(format!("reference rollout failed: {e}")),
    };
    let scenario = scenario_for(world, spec, &spec.measurement_times);
    let prediction = match evaluate_candidate(&submission.law, evaluator, &scenario, params) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let bodies = scenario.bodies.len();
    if prediction.positions.len() != spec.measurement_times.len()
        || prediction.positions.iter().any(|row| row.len() != bodies)
    {
        return failed("prediction shape does not match the scenario".to_string());
    }
    let scored = world.agent_exposed_indices();
    let times = spec.measurement_times.len() as f64;
    let mut per_particle = Vec::with_capacity(scored.len());
    for k in scored {
        let mut sum = 0.0;
        for (t, row) in prediction.positions.iter().enumerate() {
            let actual = truth[t * world.exposed_count() + k].position;
            sum += (row[k] - actual).norm_squared();
        }
        per_particle.push(sum / times);
    }
    let mean = per_particle.iter().sum::<f64>() / per_particle.len().max(1) as f64;
    let max = per_particle.iter().copied().fold(0.0, f64::max);
    let (mean, max) = if mean.is_nan() { (f64::INFINITY, f64::INFINITY) } else { (mean, max) };
    CaseResult {
        label: label.to_string(),
        mean_particle_mse: mean,
        max_particle_mse: max,
        error: None,
    }
}

/// Fits the submitted law to what the agent observed, then scores it on the
/// world's held-out suite. The explanation score is left pending; apply one with
/// [`WorldResult::with_explanation`].
pub fn evaluate_submission<E: LawEvaluator + ?Sized>(
    world: &WorldDefinition,
    submission: &FinalSubmission,
    observed: &[ObservedExperiment],
    evaluator: &mut E,
    settings: &FitSettings,
    clock: &dyn Clock,
) -> WorldResult {
    let fit_report = fit_parameters(&submission.law, evaluator, world, observed, settings, clock);
    let params = fit_report.fitted_params.clone();
    let cases: Vec<CaseResult> = world
        .held_out
        .cases
        .iter()
        .map(|case| score_case(world, submission, evaluator, &params, &case.label, &case.experiment))
        .collect();
    let mean = if cases.is_empty() {
        f64::INFINITY
    } else {
        cases.iter().map(|c| c.mean_particle_mse).sum::<f64>() / cases.len() as f64
    };
    let max = cases.iter().map(|c| c.max_particle_mse).fold(0.0, f64::max);
    let norm = normalize_mse(mean, world.held_out.reference_variance).unwrap_or(f64::INFINITY);
    WorldResult {
        world: world.name.clone(),
        norm_mse: norm,
        mean_particle_mse: mean,
        max_particle_mse: max,
        cases,
        explanation_score: None,
        judge_reasoning: None,
        judge_error: None,
        passed: verdict(norm, None),
        provisional: true,
        fit_report,
    }
}

/// Evaluates and, when a judge is available, scores the explanation as well.
pub fn evaluate_with_judge<E: LawEvaluator + ?Sized>(
    world: &WorldDefinition,
    submission: &FinalSubmission,
    observed: &[ObservedExperiment],
    evaluator: &mut E,
    settings: &FitSettings,
    clock: &dyn Clock,
    judge: Option<(&RubricFile, &mut dyn JudgeClient)>,
) -> WorldResult {
    let result = evaluate_submission(world, submission, observed, evaluator, settings, clock);
    match judge {
        None => result.with_explanation(None),
        Some((rubric, client)) => match score_explanation(rubric, &submission.explanation, client) {
            Ok(score) => result.with_explanation(Some(&score)),
            Err(e) => {
                let mut r = result.with_explanation(None);
                r.judge_error = Some(e.to_string());
                r
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_basics() {
        assert_eq!(normalize_mse(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(normalize_mse(2.0, 2.0).unwrap(), 1.0);
        assert!(matches!(normalize_mse(1.0, 0.0), Err(EvalError::ZeroVariance(_))));
        let c = 3.5;
        assert!((normalize_mse(0.2 * c * c, 1.7 * c * c).unwrap() - 0.2 / 1.7).abs() < 1e-15);
    }

    #[test]
    fn dual_threshold_verdict() {
        assert!(!verdict(0.09, Some(0.5)));
        assert!(verdict(0.09, Some(0.9)));
        assert!(!verdict(0.1, Some(1.0)));
        assert!(verdict(0.05, None));
        assert!(!verdict(f64::INFINITY, None));
    }
}
