//! pass@k: the expected share of worlds with at least one pass among k attempts.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const PASS_AT_K_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassAtK {
    pub k: usize,
    pub mean_percent: f64,
    pub stderr: f64,
}

fn check(table: &[Vec<bool>], k: usize) -> Result<(), EvalError> {
    if table.is_empty() {
        return Err(EvalError::Argument("pass table has no worlds".to_string()));
    }
    if k == 0 {
        return Err(EvalError::Argument("k must be at least 1".to_string()));
    }
    if let Some((w, row)) = table.iter().enumerate().find(|(_, row)| row.len() < k) {
        return Err(EvalError::Argument(format!(
            "k = {k} exceeds the {} seeds of world {w}",
            row.len()
        )));
    }
    Ok(())
}

/// Resampling estimate: each resample draws `k` seeds per world without
/// replacement and records the percentage of worlds with any pass. Reports the
/// mean and the standard deviation of that percentage across resamples.
pub fn pass_at_k(table: &[Vec<bool>], k: usize, resamples: usize, seed: u64) -> Result<PassAtK, EvalError> {
    check(table, k)?;
    if resamples == 0 {
        return Err(EvalError::Argument("resamples must be positive".to_string()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let worlds = table.len() as f64;
    let mut estimates = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let solved = table
            .iter()
            .filter(|row| sample(&mut rng, row.len(), k).iter().any(|i| row[i]))
            .count();
        estimates.push(100.0 * solved as f64 / worlds);
    }
    // Shifted by the first estimate so identical resamples give an exact mean and zero spread.
    let n = estimates.len() as f64;
    let shift = estimates[0];
    let offset = estimates.iter().map(|e| e - shift).sum::<f64>() / n;
    let mean = shift + offset;
    let var = estimates.iter().map(|e| (e - shift - offset).powi(2)).sum::<f64>() / n;
    Ok(PassAtK {
        k,
        mean_percent: mean,
        stderr: var.sqrt(),
    })
}

fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact expectation: `100 · mean_w [1 − C(n_w − p_w, k) / C(n_w, k)]`.
pub fn exact_pass_at_k(table: &[Vec<bool>], k: usize) -> Result<f64, EvalError> {
    check(table, k)?;
    let total: f64 = table
        .iter()
        .map(|row| {
            let n = row.len();
            let fails = row.iter().filter(|p| !**p).count();
            1.0 - choose(fails, k) / choose(n, k)
        })
        .sum();
    Ok(100.0 * total / table.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_the_worlds_always_pass() {
        let mut table = vec![vec![true; 5]; 11];
        table.extend(vec![vec![false; 5]; 11]);
        let r = pass_at_k(&table, 5, PASS_AT_K_RESAMPLES, 0).unwrap();
        assert_eq!(r.mean_percent, 50.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn k_above_seed_count_is_rejected() {
        assert!(pass_at_k(&[vec![true; 3]], 4, 10, 0).is_err());
        assert!(exact_pass_at_k(&[], 1).is_err());
    }

    #[test]
    fn exact_single_world() {
        let table = vec![vec![true, false, false, false, false]];
        assert!((exact_pass_at_k(&table, 1).unwrap() - 20.0).abs() < 1e-12);
        assert!((exact_pass_at_k(&table, 5).unwrap() - 100.0).abs() < 1e-12);
    }
}
