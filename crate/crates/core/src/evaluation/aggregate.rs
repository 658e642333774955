//! Benchmark-level aggregation over a model × world × seed table of results.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::passk::{pass_at_k, PassAtK, PASS_AT_K_RESAMPLES};
use super::EvalError;
use crate::textfmt::{format_g, nonfinite};

pub const BOOTSTRAP_RESAMPLES: usize = 5000;

/// One evaluated (model, world, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: String,
    pub world: String,
    pub seed: u64,
    #[serde(with = "nonfinite")]
    pub norm_mse: f64,
    pub explanation_score: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub worlds: usize,
    /// Mean over worlds of the per-world mean explanation score (scored cells only).
    pub mean_explanation: Option<f64>,
    pub explanation_stderr: Option<f64>,
    /// Geometric mean over worlds of the per-world mean finite normalized MSE.
    #[serde(with = "nonfinite")]
    pub geo_mean_mse: f64,
    /// Percentile bootstrap interval covering the central 68%.
    pub mse_interval: [f64; 2],
    /// Cells with infinite normalized MSE, left out of the geometric mean.
    pub infinite_cells: usize,
    /// Worlds whose every cell was infinite.
    pub infinite_worlds: usize,
    pub pass_at_k: Vec<PassAtK>,
    /// Mean explanation score per world, for heatmaps.
    pub per_world_explanation: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub models: Vec<ModelSummary>,
    pub bootstrap_resamples: usize,
    pub pass_at_k_resamples: usize,
    pub seed: u64,
}

/// `exp(mean(ln x))`; zero entries are floored at the smallest positive float.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let logs: f64 = values.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum();
    (logs / values.len() as f64).exp()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Resamples `values` with replacement and returns the 16th and 84th percentiles
/// of the geometric mean.
pub fn bootstrap_geometric_mean(values: &[f64], resamples: usize, rng: &mut ChaCha20Rng) -> [f64; 2] {
    if values.is_empty() || resamples == 0 {
        return [f64::NAN, f64::NAN];
    }
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..values.len())
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            geometric_mean(&draw)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    [percentile(&stats, 0.16), percentile(&stats, 0.84)]
}

fn bootstrap_mean_stderr(values: &[f64], resamples: usize, rng: &mut ChaCha20Rng) -> f64 {
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            (0..values.len())
                .map(|_| values[rng.random_range(0..values.len())])
                .sum::<f64>()
                / values.len() as f64
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / stats.len() as f64).sqrt()
}

/// Summarizes every model in `cells`. Output is independent of cell order.
pub fn aggregate(cells: &[CellResult], seed: u64) -> Result<AggregateReport, EvalError> {
    if cells.is_empty() {
        return Err(EvalError::Argument("result table is empty".to_string()));
    }
    let mut by_model: BTreeMap<&str, BTreeMap<&str, Vec<&CellResult>>> = BTreeMap::new();
    for cell in cells {
        by_model
            .entry(cell.model.as_str())
            .or_default()
            .entry(cell.world.as_str())
            .or_default()
            .push(cell);
    }
    let mut models = Vec::new();
    for (model_index, (model, worlds)) in by_model.into_iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(model_index as u64));
        let mut finite_means = Vec::new();
        let mut infinite_cells = 0;
        let mut infinite_worlds = 0;
        let mut explanation_means = Vec::new();
        let mut per_world_explanation = BTreeMap::new();
        let mut table = Vec::new();
        for (world, cells) in &worlds {
            let mut cells = cells.clone();
            cells.sort_by_key(|c| c.seed);
            let finite: Vec<f64> = cells.iter().map(|c| c.norm_mse).filter(|v| v.is_finite()).collect();
            infinite_cells += cells.len() - finite.len();
            if finite.is_empty() {
                infinite_worlds += 1;
            } else {
                finite_means.push(finite.iter().sum::<f64>() / finite.len() as f64);
            }
            let scores: Vec<f64> = cells.iter().filter_map(|c| c.explanation_score).collect();
            let world_mean = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
            if let Some(m) = world_mean {
                explanation_means.push(m);
            }
            per_world_explanation.insert(world.to_string(), world_mean);
            table.push(cells.iter().map(|c| c.passed && c.norm_mse.is_finite()).collect::<Vec<bool>>());
        }
        let min_seeds = table.iter().map(Vec::len).min().unwrap_or(0);
        let pass = (1..=min_seeds.min(5))
            .map(|k| pass_at_k(&table, k, PASS_AT_K_RESAMPLES, seed.wrapping_add(k as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let (mean_explanation, explanation_stderr) = if explanation_means.is_empty() {
            (None, None)
        } else {
            let mean = explanation_means.iter().sum::<f64>() / explanation_means.len() as f64;
            (
                Some(mean),
                Some(bootstrap_mean_stderr(&explanation_means, BOOTSTRAP_RESAMPLES, &mut rng)),
            )
        };
        let geo = if finite_means.is_empty() {
            f64::INFINITY
        } else {
            geometric_mean(&finite_means)
        };
        let interval = bootstrap_geometric_mean(&finite_means, BOOTSTRAP_RESAMPLES, &mut rng);
        models.push(ModelSummary {
            model: model.to_string(),
            worlds: worlds.len(),
            mean_explanation,
            explanation_stderr,
            geo_mean_mse: geo,
            mse_interval: interval,
            infinite_cells,
            infinite_worlds,
            pass_at_k: pass,
            per_world_explanation,
        });
    }
    Ok(AggregateReport {
        models,
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        pass_at_k_resamples: PASS_AT_K_RESAMPLES,
        seed,
    })
}

/// Markdown table: explanation score, normalized MSE with its interval, pass@1..5.
pub fn render_table(report: &AggregateReport) -> String {
    let mut out = String::from(
        "| Model | Explanation score | Normalized MSE [16%, 84%] | pass@1 | pass@2 | pass@3 | pass@4 | pass@5 |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for m in &report.models {
        let expl = match (m.mean_explanation, m.explanation_stderr) {
            (Some(v), Some(e)) => format!("{v:.2} ± {e:.2}"),
            _ => "pending".to_string(),
        };
        let mse = format!(
            "{} [{}, {}]",
            format_g(m.geo_mean_mse, 3),
            format_g(m.mse_interval[0], 3),
            format_g(m.mse_interval[1], 3)
        );
        let mut row = format!("| {} | {expl} | {mse} |", m.model);
        for k in 1..=5 {
            match m.pass_at_k.iter().find(|p| p.k == k) {
                Some(p) => row.push_str(&format!(" {:.1} ± {:.1} |", p.mean_percent, p.stderr)),
                None => row.push_str(" n/a |"),
            }
        }
        out.push_str(&row);
        out.push('\n');
    }
    for m in &report.models {
        if m.infinite_cells > 0 {
            out.push_str(&format!(
                "\n{}: {} cell(s) with infinite normalized MSE left out of the geometric mean ({} world(s) fully excluded)",
                m.model, m.infinite_cells, m.infinite_worlds
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_mean_examples() {
        assert!((geometric_mean(&[0.3, 0.3, 0.3]) - 0.3).abs() < 1e-15);
        assert!((geometric_mean(&[0.01, 1.0, 100.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(aggregate(&[], 0).is_err());
    }
}
