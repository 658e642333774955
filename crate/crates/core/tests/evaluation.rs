//! Held-out scoring, pass@k estimation, aggregation and the explanation judge.

use std::collections::BTreeMap;

use proptest::prelude::*;

use lawforge_core::engine::ExperimentSpec;
use lawforge_core::evaluation::{
    aggregate, builtin_rubric, evaluate_submission, evaluate_with_judge, exact_pass_at_k, geometric_mean,
    normalize_mse, pass_at_k, score_explanation, suite_variance, CellResult, JudgeClient, StubJudge,
    MSE_THRESHOLD,
};
use lawforge_core::forcelaws::catalog::lookup;
use lawforge_core::lawrunner::{
    parse_response, CandidateLaw, FitSettings, LawEvaluator, Prediction, RunnerError, RunnerRequest, Scenario,
    SystemClock,
};
use lawforge_core::protocol::FinalSubmission;
use lawforge_core::reference_runner::{respond, runner_package, RunnerMode};
use lawforge_core::WorldDefinition;

struct InProcess(RunnerMode);

impl LawEvaluator for InProcess {
    fn evaluate(&mut self, scenario: &Scenario, params: &BTreeMap<String, f64>) -> Result<Prediction, RunnerError> {
        let line = RunnerRequest::new(scenario.clone(), params.clone()).to_line();
        parse_response(&respond(&self.0, line.trim()), scenario)
    }
}

fn submission(explanation: &str) -> FinalSubmission {
    FinalSubmission {
        explanation: explanation.to_string(),
        law: CandidateLaw {
            package: runner_package("in-process", &[]),
            param_specs: Vec::new(),
            docstring: String::new(),
        },
    }
}

fn evaluate_in_process(world: &WorldDefinition, mode: RunnerMode) -> lawforge_core::evaluation::WorldResult {
    evaluate_submission(
        world,
        &submission("x"),
        &[],
        &mut InProcess(mode),
        &FitSettings::default(),
        &SystemClock::start(),
    )
}

#[test]
fn a_law_that_always_errors_fails_with_infinite_mse() {
    let world = lookup("three_species").unwrap();
    let result = evaluate_in_process(&world, RunnerMode::Error);
    assert!(result.norm_mse.is_infinite());
    assert!(!result.passed);
    let text = result.render();
    assert!(text.contains("Result: FAIL"), "{text}");
    assert!(text.contains("ERROR"), "{text}");
}

#[test]
fn empty_history_skips_the_fit_but_still_scores() {
    let world = lookup("coulomb_easy").unwrap();
    let result = evaluate_in_process(&world, RunnerMode::Truth(Box::new(world.clone())));
    assert!(result.fit_report.skipped());
    assert!(result.render().contains("fit skipped: no training trajectories available"));
    assert!(result.norm_mse < 1e-3);
    assert!(result.provisional);
}

#[test]
fn truth_law_stays_accurate_when_held_out_durations_double() {
    let mut world = lookup("gravity").unwrap();
    for case in &mut world.held_out.cases {
        let spec = &case.experiment;
        let times = spec.measurement_times.iter().map(|t| 2.0 * t).collect();
        case.experiment = ExperimentSpec::new(spec.payload.clone(), times).starting_at(spec.start_time);
    }
    let before = world.held_out.reference_variance;
    world.held_out.reference_variance = suite_variance(&world, &world.held_out.cases).unwrap();
    assert_ne!(before, world.held_out.reference_variance);
    let result = evaluate_in_process(&world, RunnerMode::Truth(Box::new(world.clone())));
    assert!(result.norm_mse < 1e-3, "norm_mse {}", result.norm_mse);
}

#[test]
fn judge_marker_ten_scores_one() {
    let rubric = builtin_rubric("gravity").unwrap();
    let score = score_explanation(&rubric, "inverse distance attraction", &mut StubJudge::scoring(10)).unwrap();
    assert_eq!(score.raw, 10);
    assert_eq!(score.normalized(), 1.0);
}

#[test]
fn stub_judge_completes_the_pipeline() {
    let world = lookup("coulomb_easy").unwrap();
    let rubric = builtin_rubric("coulomb_easy").unwrap();
    let mut judge = StubJudge::scoring(10);
    let result = evaluate_with_judge(
        &world,
        &submission("force falls as the inverse square of distance"),
        &[],
        &mut InProcess(RunnerMode::Truth(Box::new(world.clone()))),
        &FitSettings::default(),
        &SystemClock::start(),
        Some((&rubric, &mut judge as &mut dyn JudgeClient)),
    );
    assert_eq!(judge.calls, 1);
    assert_eq!(result.explanation_score, Some(1.0));
    assert!(!result.provisional);
    assert!(result.passed);
    assert!(result.render().contains("Explanation score: 1.00  (raw 10.0/10)"));
}

#[test]
fn unparsable_judge_replies_surface_in_the_report() {
    let world = lookup("coulomb_easy").unwrap();
    let rubric = builtin_rubric("coulomb_easy").unwrap();
    let mut judge = StubJudge::replying("no score here");
    let result = evaluate_with_judge(
        &world,
        &submission("x"),
        &[],
        &mut InProcess(RunnerMode::Truth(Box::new(world.clone()))),
        &FitSettings::default(),
        &SystemClock::start(),
        Some((&rubric, &mut judge as &mut dyn JudgeClient)),
    );
    assert_eq!(judge.calls, 3);
    let error = result.judge_error.clone().expect("judge error recorded");
    assert!(result.render().contains(&error));
    assert!(result.provisional);
}

#[test]
fn single_world_pass_at_k_matches_hypergeometric_values() {
    let table = vec![vec![false, true, false, false, false]];
    assert!((exact_pass_at_k(&table, 1).unwrap() - 20.0).abs() < 1e-12);
    assert!((exact_pass_at_k(&table, 5).unwrap() - 100.0).abs() < 1e-12);
    for k in 1..=5 {
        let exact = exact_pass_at_k(&table, k).unwrap();
        let got = pass_at_k(&table, k, 1000, 17).unwrap();
        let p = exact / 100.0;
        let bound = 4.0 * 100.0 * (p * (1.0 - p) / 1000.0).sqrt();
        assert!((got.mean_percent - exact).abs() <= bound, "k = {k}: {} vs {exact}", got.mean_percent);
    }
    let all = pass_at_k(&table, 5, 1000, 17).unwrap();
    assert_eq!((all.mean_percent, all.stderr), (100.0, 0.0));
}

#[test]
fn all_passing_table_is_one_hundred_percent() {
    let table = vec![vec![true; 5]; 7];
    let got = pass_at_k(&table, 1, 1000, 3).unwrap();
    assert_eq!((got.mean_percent, got.stderr), (100.0, 0.0));
}

#[test]
fn k_beyond_the_seed_count_is_an_argument_error() {
    assert!(pass_at_k(&[vec![true; 3]], 4, 10, 0).is_err());
    assert!(pass_at_k(&[], 1, 10, 0).is_err());
}

#[test]
fn geometric_mean_is_log_symmetric() {
    assert!((geometric_mean(&[0.01, 1.0, 100.0]) - 1.0).abs() < 1e-12);
    assert!((geometric_mean(&[0.25; 4]) - 0.25).abs() < 1e-15);
}

fn cells(model: &str, worlds: &[(&str, [f64; 3])]) -> Vec<CellResult> {
    worlds
        .iter()
        .flat_map(|(world, mses)| {
            mses.iter().enumerate().map(move |(seed, &norm_mse)| CellResult {
                model: model.to_string(),
                world: world.to_string(),
                seed: seed as u64,
                norm_mse,
                explanation_score: Some(if norm_mse < MSE_THRESHOLD { 1.0 } else { 0.4 }),
                passed: norm_mse < MSE_THRESHOLD,
            })
        })
        .collect()
}

#[test]
fn aggregate_excludes_infinite_cells_from_the_mean() {
    let table = cells("m", &[("a", [0.01, 0.01, 0.01]), ("b", [1.0, f64::INFINITY, 1.0])]);
    let report = aggregate(&table, 5).unwrap();
    let summary = &report.models[0];
    assert_eq!(summary.infinite_cells, 1);
    assert_eq!(summary.infinite_worlds, 0);
    assert!((summary.geo_mean_mse - 0.1).abs() < 1e-12);
    assert_eq!(report.bootstrap_resamples, 5000);
    assert!(summary.mse_interval[0] <= summary.geo_mean_mse && summary.geo_mean_mse <= summary.mse_interval[1]);
    assert!(aggregate(&[], 5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_scale_invariant(raw in 0.0..10.0f64, var in 1e-3..10.0f64, c in 1e-3..1e3f64) {
        let base = normalize_mse(raw, var).unwrap();
        let scaled = normalize_mse(raw * c * c, var * c * c).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1e-300));
    }

    #[test]
    fn pass_at_k_is_monotone_in_k(table in prop::collection::vec(prop::collection::vec(any::<bool>(), 5), 1..8)) {
        let mut previous = 0.0;
        for k in 1..=5 {
            let exact = exact_pass_at_k(&table, k).unwrap();
            prop_assert!(exact + 1e-9 >= previous);
            previous = exact;
        }
        let full = pass_at_k(&table, 5, 50, 1).unwrap();
        let union = 100.0 * table.iter().filter(|r| r.iter().any(|p| *p)).count() as f64 / table.len() as f64;
        prop_assert_eq!(full.stderr, 0.0);
        prop_assert!((full.mean_percent - union).abs() < 1e-9);
    }

    #[test]
    fn aggregate_ignores_cell_order(
        mses in prop::collection::vec(prop::array::uniform3(1e-4..10.0f64), 2..5),
        rotation in 0usize..20,
    ) {
        let names: Vec<String> = (0..mses.len()).map(|i| format!("w{i}")).collect();
        let worlds: Vec<(&str, [f64; 3])> = names.iter().map(String::as_str).zip(mses.iter().copied()).collect();
        let table = cells("m", &worlds);
        let mut shuffled = table.clone();
        shuffled.reverse();
        let len = shuffled.len();
        shuffled.rotate_left(rotation % len);
        prop_assert_eq!(aggregate(&table, 9).unwrap(), aggregate(&shuffled, 9).unwrap());
    }
}
