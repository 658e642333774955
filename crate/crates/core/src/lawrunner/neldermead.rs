//! Box-constrained Nelder–Mead: trial points are projected onto the bounds.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop when every vertex lies within this distance (per coordinate) of the best one.
    pub simplex_tol: f64,
    pub max_evals: usize,
    /// Fresh simplices built around the incumbent after the first run.
    pub restarts: usize,
    /// Initial edge length as a fraction of each bounded range.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            simplex_tol: 1e-10,
            max_evals: 600,
            restarts: 2,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxEvals,
    /// The objective asked to stop (wall-clock budget).
    Interrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub stop: StopReason,
}

struct Search<'a, F> {
    f: &'a mut F,
    lo: &'a [f64],
    hi: &'a [f64],
    evals: usize,
    max_evals: usize,
    best_x: Vec<f64>,
    best_f: f64,
    interrupted: bool,
}

impl<F: FnMut(&[f64]) -> Option<f64>> Search<'_, F> {
    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(self.lo).zip(self.hi) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// `None` once the evaluation budget is gone or the objective interrupts.
    fn eval(&mut self, x: &mut [f64]) -> Option<f64> {
        if self.interrupted || self.evals >= self.max_evals {
            return None;
        }
        self.project(x);
        self.evals += 1;
        match (self.f)(x) {
            None => {
                self.interrupted = true;
                None
            }
            Some(v) => {
                let v = if v.is_nan() { f64::INFINITY } else { v };
                if v < self.best_f {
                    self.best_f = v;
                    self.best_x = x.to_vec();
                }
                Some(v)
            }
        }
    }
}

fn centroid(simplex: &[(Vec<f64>, f64)], skip: usize) -> Vec<f64> {
    let n = simplex[0].0.len();
    let mut c = vec![0.0; n];
    for (i, (x, _)) in simplex.iter().enumerate() {
        if i != skip {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi;
            }
        }
    }
    let count = (simplex.len() - 1) as f64;
    c.iter_mut().for_each(|v| *v /= count);
    c
}

fn toward(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

/// One Nelder–Mead run from `start`. Returns `None` if stopped early.
fn run<F: FnMut(&[f64]) -> Option<f64>>(
    search: &mut Search<'_, F>,
    start: &[f64],
    free: &[usize],
    opts: &NelderMeadOptions,
) -> Option<StopReason> {
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(free.len() + 1);
    let mut x0 = start.to_vec();
    let f0 = search.eval(&mut x0)?;
    simplex.push((x0.clone(), f0));
    for &d in free {
        let (lo, hi) = (search.lo[d], search.hi[d]);
        let range = hi - lo;
        let step = if range.is_finite() {
            opts.initial_step * range
        } else {
            opts.initial_step * x0[d].abs().max(1.0)
        };
        let mut x = x0.clone();
        x[d] = if x0[d] + step <= hi { x0[d] + step } else { x0[d] - step };
        let fx = search.eval(&mut x)?;
        simplex.push((x, fx));
    }

    loop {
        sort(&mut simplex);
        let best = simplex[0].0.clone();
        let size = simplex
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size < opts.simplex_tol {
            return Some(StopReason::Converged);
        }
        let worst = simplex.len() - 1;
        let c = centroid(&simplex, worst);
        let (xw, fw) = simplex[worst].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[worst - 1].1;

        let mut xr = toward(&c, &xw, -1.0);
        let fr = search.eval(&mut xr)?;
        if fr < f_best {
            let mut xe = toward(&c, &xw, -2.0);
            let fe = search.eval(&mut xe)?;
            simplex[worst] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[worst] = (xr, fr);
            continue;
        }
        let (mut xc, outside) = if fr < fw {
            (toward(&c, &xr, 0.5), true)
        } else {
            (toward(&c, &xw, 0.5), false)
        };
        let fc = search.eval(&mut xc)?;
        if (outside && fc <= fr) || (!outside && fc < fw) {
            simplex[worst] = (xc, fc);
            continue;
        }
        for i in 1..simplex.len() {
            let mut xs = toward(&best, &simplex[i].0, 0.5);
            let fs = search.eval(&mut xs)?;
            simplex[i] = (xs, fs);
        }
    }
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0` (projected first).
///
/// `f` returns `None` to stop the search immediately; the best point seen so far
/// is returned in every case. Coordinates with `lo == hi` stay fixed.
pub fn minimize_bounded<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let free: Vec<usize> = (0..x0.len()).filter(|&d| hi[d] > lo[d]).collect();
    let mut search = Search {
        f: &mut f,
        lo,
        hi,
        evals: 0,
        max_evals: opts.max_evals.max(1),
        best_x: x0.to_vec(),
        best_f: f64::INFINITY,
        interrupted: false,
    };
    let mut start = x0.to_vec();
    search.project(&mut start);
    search.best_x = start.clone();

    let mut stop = StopReason::Converged;
    let runs = if free.is_empty() { 1 } else { 1 + opts.restarts };
    for _ in 0..runs {
        let from = search.best_x.clone();
        match run(&mut search, &from, &free, opts) {
            Some(reason) => stop = reason,
            None => {
                stop = if search.interrupted {
                    StopReason::Interrupted
                } else {
                    StopReason::MaxEvals
                };
                break;
            }
        }
        if free.is_empty() {
            break;
        }
    }
    NelderMeadOutcome {
        x: search.best_x,
        fx: search.best_f,
        evals: search.evals,
        stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let out = minimize_bounded(
            |x| Some((x[0] - 0.3).powi(2)),
            &[0.9],
            &[0.0],
            &[1.0],
            &NelderMeadOptions::default(),
        );
        assert!((out.x[0] - 0.3).abs() < 1e-6, "{out:?}");
        assert_eq!(out.stop, StopReason::Converged);
    }

    #[test]
    fn respects_bounds_for_exterior_minimum() {
        let mut seen_outside = false;
        let out = minimize_bounded(
            |x| {
                seen_outside |= x.iter().any(|v| !(-1.0..=2.0).contains(v));
                Some((x[0] - 5.0).powi(2) + (x[1] + 3.0).powi(2))
            },
            &[0.0, 0.0],
            &[-1.0, -1.0],
            &[2.0, 2.0],
            &NelderMeadOptions::default(),
        );
        assert!(!seen_outside);
        assert!((out.x[0] - 2.0).abs() < 1e-6 && (out.x[1] + 1.0).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn rosenbrock_two_dimensions() {
        let opts = NelderMeadOptions {
            max_evals: 5000,
            ..NelderMeadOptions::default()
        };
        let out = minimize_bounded(
            |x| Some(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &opts,
        );
        assert!(out.fx < 1e-10, "{out:?}");
    }

    #[test]
    fn interruption_returns_best_so_far() {
        let mut calls = 0;
        let out = minimize_bounded(
            |x| {
                calls += 1;
                (calls <= 3).then(|| (x[0] - 0.5).powi(2))
            },
            &[0.0],
            &[0.0],
            &[1.0],
            &NelderMeadOptions::default(),
        );
        assert_eq!(out.stop, StopReason::Interrupted);
        assert!(out.fx <= 0.25);
    }

    #[test]
    fn fixed_coordinates_need_one_evaluation() {
        let out = minimize_bounded(|x| Some(x[0]), &[0.4], &[0.4], &[0.4], &NelderMeadOptions::default());
        assert_eq!(out.evals, 1);
        assert_eq!(out.x, vec![0.4]);
    }
}
