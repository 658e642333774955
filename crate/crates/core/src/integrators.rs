//! Time stepping for particle systems under an externally supplied acceleration field.
//!
//! Symplectic schemes are written as kick/drift compositions of the
//! velocity-Verlet leapfrog; RK4 and the adaptive Dormand–Prince pair act on
//! the full phase-space state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ParticleState;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Yoshida4,
    Yoshida6,
    SymplecticEuler,
    Leapfrog,
    AdaptiveRk,
}

impl Scheme {
    pub const FIXED: [Scheme; 5] = [
        Scheme::Rk4,
        Scheme::Yoshida4,
        Scheme::Yoshida6,
        Scheme::SymplecticEuler,
        Scheme::Leapfrog,
    ];

    pub fn is_symplectic(self) -> bool {
        matches!(
            self,
            Scheme::Yoshida4 | Scheme::Yoshida6 | Scheme::SymplecticEuler | Scheme::Leapfrog
        )
    }

    /// Nominal global order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            Scheme::SymplecticEuler => 1,
            Scheme::Leapfrog => 2,
            Scheme::Rk4 | Scheme::Yoshida4 => 4,
            Scheme::AdaptiveRk => 5,
            Scheme::Yoshida6 => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorChoice {
    pub scheme: Scheme,
    pub step_size: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl IntegratorChoice {
    pub fn fixed(scheme: Scheme, step_size: f64) -> Self {
        Self {
            scheme,
            step_size,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
        }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            scheme: Scheme::AdaptiveRk,
            step_size: 1e-2,
            rel_tol,
            abs_tol,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("non-finite acceleration on particle {particle} at t = {time}")]
    NonFiniteAcceleration { particle: usize, time: f64 },
    #[error("invalid measurement schedule: {0}")]
    Schedule(String),
    #[error("invalid integrator settings: {0}")]
    Settings(String),
    #[error("adaptive step size underflow at t = {time}")]
    StepUnderflow { time: f64 },
}

/// Acceleration field: fills `out[i]` with the acceleration of `states[i]` at time `t`.
pub trait Acceleration {
    fn accelerations(&mut self, states: &[ParticleState], t: f64, out: &mut [Vec2]);
}

impl<F> Acceleration for F
where
    F: FnMut(&[ParticleState], f64, &mut [Vec2]),
{
    fn accelerations(&mut self, states: &[ParticleState], t: f64, out: &mut [Vec2]) {
        self(states, t, out)
    }
}

fn eval<A: Acceleration + ?Sized>(
    accel: &mut A,
    states: &[ParticleState],
    t: f64,
    out: &mut [Vec2],
) -> Result<(), IntegrationError> {
    accel.accelerations(states, t, out);
    match out.iter().position(|a| !a.is_finite()) {
        Some(particle) => Err(IntegrationError::NonFiniteAcceleration { particle, time: t }),
        None => Ok(()),
    }
}

const CBRT2: f64 = 1.259_921_049_894_873_2;

fn yoshida4_weights() -> [f64; 3] {
    let w1 = 1.0 / (2.0 - CBRT2);
    let w0 = -CBRT2 / (2.0 - CBRT2);
    [w1, w0, w1]
}

fn yoshida6_weights() -> [f64; 7] {
    let w1 = -1.177_679_984_178_87;
    let w2 = 0.235_573_213_359_357;
    let w3 = 0.784_513_610_477_560;
    let w0 = 1.0 - 2.0 * (w1 + w2 + w3);
    [w3, w2, w1, w0, w1, w2, w3]
}

/// Kick-drift-kick composition of leapfrog stages with the given weights.
/// Adjacent half-kicks are merged, so `weights.len() + 1` force evaluations per step.
fn composed_leapfrog<A: Acceleration + ?Sized>(
    states: &mut [ParticleState],
    accel: &mut A,
    t: f64,
    h: f64,
    weights: &[f64],
    buf: &mut [Vec2],
) -> Result<(), IntegrationError> {
    let mut time = t;
    let mut kick = 0.5 * weights[0];
    for (i, w) in weights.iter().enumerate() {
        eval(accel, states, time, buf)?;
        for (p, a) in states.iter_mut().zip(buf.iter()) {
            p.velocity += *a * (kick * h);
        }
        for p in states.iter_mut() {
            p.position += p.velocity * (w * h);
        }
        time += w * h;
        kick = match weights.get(i + 1) {
            Some(next) => 0.5 * (w + next),
            None => 0.5 * w,
        };
    }
    eval(accel, states, t + h, buf)?;
    for (p, a) in states.iter_mut().zip(buf.iter()) {
        p.velocity += *a * (kick * h);
    }
    Ok(())
}

fn symplectic_euler<A: Acceleration + ?Sized>(
    states: &mut [ParticleState],
    accel: &mut A,
    t: f64,
    h: f64,
    buf: &mut [Vec2],
) -> Result<(), IntegrationError> {
    eval(accel, states, t, buf)?;
    for (p, a) in states.iter_mut().zip(buf.iter()) {
        p.velocity += *a * h;
        p.position += p.velocity * h;
    }
    Ok(())
}

fn shifted(base: &[ParticleState], dx: &[Vec2], dv: &[Vec2], scale: f64, out: &mut Vec<ParticleState>) {
    out.clear();
    out.extend(base.iter().zip(dx).zip(dv).map(|((p, x), v)| {
        let mut q = *p;
        q.position += *x * scale;
        q.velocity += *v * scale;
        q
    }));
}

fn rk4<A: Acceleration + ?Sized>(
    states: &mut [ParticleState],
    accel: &mut A,
    t: f64,
    h: f64,
) -> Result<(), IntegrationError> {
    let n = states.len();
    let mut stage = Vec::with_capacity(n);
    let vel = |s: &[ParticleState]| s.iter().map(|p| p.velocity).collect::<Vec<_>>();

    let k1x = vel(states);
    let mut k1v = vec![Vec2::ZERO; n];
    eval(accel, states, t, &mut k1v)?;

    shifted(states, &k1x, &k1v, 0.5 * h, &mut stage);
    let k2x = vel(&stage);
    let mut k2v = vec![Vec2::ZERO; n];
    eval(accel, &stage, t + 0.5 * h, &mut k2v)?;

    shifted(states, &k2x, &k2v, 0.5 * h, &mut stage);
    let k3x = vel(&stage);
    let mut k3v = vec![Vec2::ZERO; n];
    eval(accel, &stage, t + 0.5 * h, &mut k3v)?;

    shifted(states, &k3x, &k3v, h, &mut stage);
    let k4x = vel(&stage);
    let mut k4v = vec![Vec2::ZERO; n];
    eval(accel, &stage, t + h, &mut k4v)?;

    let sixth = h / 6.0;
    for i in 0..n {
        states[i].position += (k1x[i] + k2x[i] * 2.0 + k3x[i] * 2.0 + k4x[i]) * sixth;
        states[i].velocity += (k1v[i] + k2v[i] * 2.0 + k3v[i] * 2.0 + k4v[i]) * sixth;
    }
    Ok(())
}

fn fixed_step<A: Acceleration + ?Sized>(
    states: &mut [ParticleState],
    accel: &mut A,
    t: f64,
    h: f64,
    scheme: Scheme,
    buf: &mut [Vec2],
) -> Result<(), IntegrationError> {
    match scheme {
        Scheme::Rk4 => rk4(states, accel, t, h),
        Scheme::Leapfrog => composed_leapfrog(states, accel, t, h, &[1.0], buf),
        Scheme::Yoshida4 => composed_leapfrog(states, accel, t, h, &yoshida4_weights(), buf),
        Scheme::Yoshida6 => composed_leapfrog(states, accel, t, h, &yoshida6_weights(), buf),
        Scheme::SymplecticEuler => symplectic_euler(states, accel, t, h, buf),
        Scheme::AdaptiveRk => {
            let mut h_try = h;
            dormand_prince_step(states, accel, t, h, &mut h_try, None).map(|_| ())
        }
    }
}

/// Advances every particle by one step of size `choice.step_size`.
/// For the adaptive scheme this is one unchecked 5th-order step.
pub fn step<A: Acceleration + ?Sized>(
    states: &[ParticleState],
    accel: &mut A,
    t: f64,
    choice: &IntegratorChoice,
) -> Result<Vec<ParticleState>, IntegrationError> {
    let mut next = states.to_vec();
    let mut buf = vec![Vec2::ZERO; states.len()];
    fixed_step(&mut next, accel, t, choice.step_size, choice.scheme, &mut buf)?;
    Ok(next)
}

/// Same as [`step`] with an explicit (possibly negative) step size.
pub fn step_by<A: Acceleration + ?Sized>(
    states: &[ParticleState],
    accel: &mut A,
    t: f64,
    h: f64,
    scheme: Scheme,
) -> Result<Vec<ParticleState>, IntegrationError> {
    let mut next = states.to_vec();
    let mut buf = vec![Vec2::ZERO; states.len()];
    fixed_step(&mut next, accel, t, h, scheme, &mut buf)?;
    Ok(next)
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince attempt of size `h`. With tolerances, returns `Ok(false)` and
/// leaves `states` untouched on rejection; `h_next` receives the proposed next size.
fn dormand_prince_step<A: Acceleration + ?Sized>(
    states: &mut [ParticleState],
    accel: &mut A,
    t: f64,
    h: f64,
    h_next: &mut f64,
    tolerances: Option<(f64, f64)>,
) -> Result<bool, IntegrationError> {
    let n = states.len();
    let mut kx: Vec<Vec<Vec2>> = Vec::with_capacity(7);
    let mut kv: Vec<Vec<Vec2>> = Vec::with_capacity(7);
    let mut stage: Vec<ParticleState> = states.to_vec();
    for s in 0..7 {
        stage.clear();
        for (i, p) in states.iter().enumerate() {
            let mut q = *p;
            for j in 0..s {
                let a = DP_A[s][j];
                if a != 0.0 {
                    q.position += kx[j][i] * (a * h);
                    q.velocity += kv[j][i] * (a * h);
                }
            }
            stage.push(q);
        }
        let mut acc = vec![Vec2::ZERO; n];
        eval(accel, &stage, t + DP_C[s] * h, &mut acc)?;
        kx.push(stage.iter().map(|p| p.velocity).collect());
        kv.push(acc);
    }
    let combine = |b: &[f64; 7], k: &[Vec<Vec2>], i: usize| {
        let mut acc = Vec2::ZERO;
        for (s, coef) in b.iter().enumerate() {
            if *coef != 0.0 {
                acc += k[s][i] * *coef;
            }
        }
        acc * h
    };

    if let Some((rtol, atol)) = tolerances {
        let mut err_sq = 0.0;
        for (i, p) in states.iter().enumerate() {
            let dx5 = combine(&DP_B5, &kx, i);
            let dv5 = combine(&DP_B5, &kv, i);
            let ex = dx5 - combine(&DP_B4, &kx, i);
            let ev = dv5 - combine(&DP_B4, &kv, i);
            let new_x = p.position + dx5;
            let new_v = p.velocity + dv5;
            let scale = |old: f64, new: f64| atol + rtol * old.abs().max(new.abs());
            for (e, old, new) in [
                (ex.x, p.position.x, new_x.x),
                (ex.y, p.position.y, new_x.y),
                (ev.x, p.velocity.x, new_v.x),
                (ev.y, p.velocity.y, new_v.y),
            ] {
                let r = e / scale(old, new);
                err_sq += r * r;
            }
        }
        let err = (err_sq / (4 * n.max(1)) as f64).sqrt();
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        *h_next = h * factor;
        if err > 1.0 {
            return Ok(false);
        }
    }
    for (i, p) in states.iter_mut().enumerate() {
        p.position += combine(&DP_B5, &kx, i);
        p.velocity += combine(&DP_B5, &kv, i);
    }
    Ok(true)
}

fn validate_schedule(times: &[f64], start_time: f64) -> Result<(), IntegrationError> {
    if !start_time.is_finite() {
        return Err(IntegrationError::Schedule("start_time must be finite".into()));
    }
    for (i, t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(IntegrationError::Schedule(format!("times[{i}] is not finite")));
        }
        if i == 0 && *t < start_time {
            return Err(IntegrationError::Schedule(format!(
                "first time {t} precedes start_time {start_time}"
            )));
        }
        if i > 0 && *t <= times[i - 1] {
            return Err(IntegrationError::Schedule(format!(
                "times must be strictly increasing (times[{}] = {} then times[{i}] = {t})",
                i - 1,
                times[i - 1]
            )));
        }
    }
    Ok(())
}

/// Integrates from `start_time` and returns one snapshot per requested time.
///
/// Fixed-step schemes take whole steps of `step_size` and shorten only the last
/// sub-step of each interval so every snapshot lands exactly on its time.
pub fn integrate_to_times<A: Acceleration + ?Sized>(
    states: &[ParticleState],
    accel: &mut A,
    times: &[f64],
    choice: &IntegratorChoice,
    start_time: f64,
) -> Result<Vec<Vec<ParticleState>>, IntegrationError> {
    validate_schedule(times, start_time)?;
    let mut current = states.to_vec();
    let mut buf = vec![Vec2::ZERO; states.len()];
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = start_time;

    if choice.scheme == Scheme::AdaptiveRk {
        if !(choice.rel_tol > 0.0 && choice.abs_tol > 0.0) {
            return Err(IntegrationError::Settings("tolerances must be positive".into()));
        }
        let mut h = choice.step_size.abs().max(1e-6);
        for &target in times {
            let mut t = t_prev;
            while t < target {
                let h_try = h.min(target - t);
                if h_try < 1e-14 * target.abs().max(1.0) {
                    break;
                }
                let mut proposed = h_try;
                let accepted = dormand_prince_step(
                    &mut current,
                    accel,
                    t,
                    h_try,
                    &mut proposed,
                    Some((choice.rel_tol, choice.abs_tol)),
                )?;
                if accepted {
                    t = if target - (t + h_try) <= 1e-15 * target.abs().max(1.0) {
                        target
                    } else {
                        t + h_try
                    };
                    // Do not let a short landing step shrink the running step size.
                    if h_try == h || proposed < h {
                        h = proposed;
                    }
                } else {
                    h = proposed;
                    if h < 1e-14 {
                        return Err(IntegrationError::StepUnderflow { time: t });
                    }
                }
            }
            out.push(current.clone());
            t_prev = target;
        }
        return Ok(out);
    }

    let h = choice.step_size;
    if !(h > 0.0) || !h.is_finite() {
        return Err(IntegrationError::Settings(format!("step_size must be positive, got {h}")));
    }
    for &target in times {
        let span = target - t_prev;
        let ratio = span / h;
        let rounded = ratio.round();
        let (full, remainder) = if (ratio - rounded).abs() < 1e-9 {
            (rounded as u64, 0.0)
        } else {
            let f = ratio.floor();
            (f as u64, span - f * h)
        };
        for i in 0..full {
            let t = t_prev + i as f64 * h;
            fixed_step(&mut current, accel, t, h, choice.scheme, &mut buf)?;
        }
        if remainder > 0.0 {
            let t = t_prev + full as f64 * h;
            fixed_step(&mut current, accel, t, remainder, choice.scheme, &mut buf)?;
        }
        out.push(current.clone());
        t_prev = target;
    }
    Ok(out)
}
