//! Least-squares fitting of a candidate law's free parameters to observed trajectories.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::neldermead::{minimize_bounded, NelderMeadOptions, StopReason};
use super::wire::{scenario_for, Scenario};
use super::{evaluate_candidate, CandidateLaw, LawEvaluator};
use crate::engine::ObservedExperiment;
use crate::textfmt::format_g;
use crate::types::WorldDefinition;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitCaps {
    pub max_traj: usize,
    pub max_times: usize,
}

impl Default for FitCaps {
    fn default() -> Self {
        Self {
            max_traj: 4,
            max_times: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub caps: FitCaps,
    pub budget: Duration,
    pub optimizer: NelderMeadOptions,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            caps: FitCaps::default(),
            budget: Duration::from_secs(180),
            optimizer: NelderMeadOptions::default(),
        }
    }
}

/// Source of elapsed wall-clock time for the fit budget.
pub trait Clock {
    fn elapsed(&self) -> Duration;
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

/// Real elapsed time multiplied by a constant, so long budgets can be exercised quickly.
pub struct ScaledClock {
    start: Instant,
    factor: f64,
}

impl ScaledClock {
    pub fn start(factor: f64) -> Self {
        Self {
            start: Instant::now(),
            factor,
        }
    }
}

impl Clock for ScaledClock {
    fn elapsed(&self) -> Duration {
        self.start.elapsed().mul_f64(self.factor)
    }
}

/// One selected trajectory: the scenario sent to the runner and the samples it must match.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPoint {
    pub experiment_id: u32,
    pub scenario: Scenario,
    /// `observed[t][k]` is agent particle `k` at the scenario's `t`-th time.
    pub observed: Vec<Vec<Vec2>>,
    /// Index of the first agent particle among the scenario bodies.
    pub first_scored: usize,
}

impl TrainingPoint {
    pub fn residual_count(&self) -> usize {
        self.observed.iter().map(Vec::len).sum::<usize>() * 2
    }
}

fn evenly_spaced(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    if m == 1 {
        return vec![n - 1];
    }
    let mut idx: Vec<usize> = (0..m)
        .map(|i| ((i * (n - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Picks the `max_traj` experiments with the longest time span (ties go to the
/// earlier experiment), then `max_times` evenly spaced measurement times in each.
pub fn select_training(
    world: &WorldDefinition,
    experiments: &[ObservedExperiment],
    caps: &FitCaps,
) -> Vec<TrainingPoint> {
    let mut order: Vec<&ObservedExperiment> = experiments.iter().collect();
    order.sort_by(|a, b| {
        b.spec
            .span()
            .total_cmp(&a.spec.span())
            .then(a.experiment_id.cmp(&b.experiment_id))
    });
    let scored = world.agent_exposed_indices();
    order
        .into_iter()
        .take(caps.max_traj)
        .map(|exp| {
            let all_times = &exp.spec.measurement_times;
            let picks = evenly_spaced(all_times.len(), caps.max_times);
            let times: Vec<f64> = picks.iter().map(|&i| all_times[i]).collect();
            let observed = times
                .iter()
                .map(|t| {
                    scored
                        .clone()
                        .map(|k| {
                            exp.samples
                                .iter()
                                .find(|s| s.time == *t && s.particle_index == k)
                                .map(|s| s.position)
                                .unwrap_or(Vec2::new(f64::NAN, f64::NAN))
                        })
                        .collect()
                })
                .collect();
            TrainingPoint {
                experiment_id: exp.experiment_id,
                scenario: scenario_for(world, &exp.spec, &times),
                observed,
                first_scored: scored.start,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fitted_params: BTreeMap<String, f64>,
    #[serde(with = "crate::textfmt::nonfinite")]
    pub loss_before: f64,
    #[serde(with = "crate::textfmt::nonfinite")]
    pub loss_after: f64,
    pub trajectories_used: usize,
    pub trajectories_available: usize,
    pub budget_exhausted: bool,
    pub error_text: Option<String>,
    pub caps: FitCaps,
    pub budget_seconds: f64,
    pub residual_points: usize,
    pub evaluations: usize,
}

impl FitReport {
    pub fn skipped(&self) -> bool {
        self.trajectories_available == 0
    }

    /// Bracketed status lines followed by parameters and losses.
    pub fn render(&self) -> String {
        let mut out = Vec::new();
        if self.skipped() {
            out.push("[fit skipped: no training trajectories available]".to_string());
        } else {
            out.push(format!(
                "[fit using {}/{} training trajectories (cap: {} traj × {} times)]",
                self.trajectories_used,
                self.trajectories_available,
                self.caps.max_traj,
                self.caps.max_times
            ));
            if self.budget_exhausted {
                out.push(format!(
                    "[fit hit {}s wall-clock budget; using best-so-far parameters (loss={})]",
                    format_g(self.budget_seconds, 4),
                    format_g(self.loss_after, 4)
                ));
            }
        }
        if !self.fitted_params.is_empty() {
            let params: Vec<String> = self
                .fitted_params
                .iter()
                .map(|(k, v)| format!("{k}={}", format_g(*v, 4)))
                .collect();
            out.push(format!("Fitted parameters: {}", params.join(", ")));
        }
        if !self.skipped() {
            out.push(format!(
                "Training-set loss: {} → {}",
                format_g(self.loss_before, 4),
                format_g(self.loss_after, 4)
            ));
        }
        if let Some(err) = &self.error_text {
            out.push(format!("Fit error: {err}"));
        }
        out.join("\n")
    }
}

fn training_loss<E: LawEvaluator + ?Sized>(
    law: &CandidateLaw,
    evaluator: &mut E,
    points: &[TrainingPoint],
    params: &BTreeMap<String, f64>,
    first_error: &mut Option<String>,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for point in points {
        let prediction = match evaluate_candidate(law, evaluator, &point.scenario, params) {
            Ok(p) => p,
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
                return f64::INFINITY;
            }
        };
        let bodies = point.scenario.bodies.len();
        if prediction.positions.len() != point.observed.len()
            || prediction.positions.iter().any(|row| row.len() != bodies)
        {
            first_error.get_or_insert_with(|| "prediction shape does not match the scenario".into());
            return f64::INFINITY;
        }
        for (t, row) in point.observed.iter().enumerate() {
            for (k, obs) in row.iter().enumerate() {
                let pred = prediction.positions[t][point.first_scored + k];
                sum += (pred - *obs).norm_squared();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Fits the law's declared parameters by projected Nelder–Mead on mean squared
/// position error over a capped selection of the observed experiments.
pub fn fit_parameters<E: LawEvaluator + ?Sized>(
    law: &CandidateLaw,
    evaluator: &mut E,
    world: &WorldDefinition,
    experiments: &[ObservedExperiment],
    settings: &FitSettings,
    clock: &dyn Clock,
) -> FitReport {
    let points = select_training(world, experiments, &settings.caps);
    let init = law.initial_params();
    let mut report = FitReport {
        fitted_params: init.clone(),
        loss_before: f64::INFINITY,
        loss_after: f64::INFINITY,
        trajectories_used: points.len(),
        trajectories_available: experiments.len(),
        budget_exhausted: false,
        error_text: None,
        caps: settings.caps,
        budget_seconds: settings.budget.as_secs_f64(),
        residual_points: points.iter().map(TrainingPoint::residual_count).sum(),
        evaluations: 0,
    };
    if points.is_empty() {
        return report;
    }

    let names: Vec<String> = law.param_specs.iter().map(|p| p.name.clone()).collect();
    let x0: Vec<f64> = law.param_specs.iter().map(|p| p.init).collect();
    let lo: Vec<f64> = law.param_specs.iter().map(|p| p.bounds[0]).collect();
    let hi: Vec<f64> = law.param_specs.iter().map(|p| p.bounds[1]).collect();
    let to_map = |x: &[f64]| -> BTreeMap<String, f64> {
        names.iter().cloned().zip(x.iter().copied()).collect()
    };

    let mut first_error = None;
    let mut loss_before = None;
    let mut budget_hit = false;
    let outcome = minimize_bounded(
        |x| {
            if loss_before.is_some() && clock.elapsed() > settings.budget {
                budget_hit = true;
                return None;
            }
            let loss = training_loss(law, evaluator, &points, &to_map(x), &mut first_error);
            loss_before.get_or_insert(loss);
            Some(loss)
        },
        &x0,
        &lo,
        &hi,
        &settings.optimizer,
    );
    report.loss_before = loss_before.unwrap_or(f64::INFINITY);
    report.loss_after = outcome.fx.min(report.loss_before);
    report.fitted_params = if outcome.fx.is_finite() || x0.is_empty() {
        to_map(&outcome.x)
    } else {
        init
    };
    report.budget_exhausted = budget_hit || outcome.stop == StopReason::Interrupted;
    report.evaluations = outcome.evals;
    if !report.loss_after.is_finite() {
        report.error_text = first_error;
    }
    report
}
