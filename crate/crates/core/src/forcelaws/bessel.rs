//! Modified Bessel function of the second kind, order one.
//!
//! Power series below `x = 2`, Steed's continued fraction (CF2) above it.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_EPS: f64 = 1e-17;
const CF_EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// `K₁(x)` for `x > 0`; returns `+∞` at zero and `NaN` for negative input.
pub fn bessel_k1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x > 745.0 {
        return 0.0;
    }
    if x <= 2.0 {
        k1_series(x)
    } else {
        k1_continued_fraction(x)
    }
}

/// `K₁(x) = 1/x + ln(x/2)·I₁(x) − (x/4)·Σ (ψ(k+1)+ψ(k+2))·(x²/4)^k / (k!(k+1)!)`.
fn k1_series(x: f64) -> f64 {
    let quarter_x2 = 0.25 * x * x;

    // I₁(x) = (x/2) Σ (x²/4)^k / (k!(k+1)!)
    let mut term = 1.0;
    let mut i1_sum = 0.0;
    // ψ(1) = −γ, ψ(2) = 1 − γ
    let mut psi_k1 = -EULER_GAMMA;
    let mut psi_k2 = 1.0 - EULER_GAMMA;
    let mut psi_sum = 0.0;
    for k in 0..MAX_ITER {
        if k > 0 {
            let kf = k as f64;
            term *= quarter_x2 / (kf * (kf + 1.0));
            psi_k1 += 1.0 / kf;
            psi_k2 += 1.0 / (kf + 1.0);
        }
        i1_sum += term;
        let contrib = (psi_k1 + psi_k2) * term;
        psi_sum += contrib;
        if term < SERIES_EPS * i1_sum && contrib.abs() < SERIES_EPS * psi_sum.abs() {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * psi_sum
}

/// Steed's method for `K₀` and `K₁` at `x ≥ 2` (fractional order μ = 0).
fn k1_continued_fraction(x: f64) -> f64 {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < CF_EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    k0 * (x + 0.5 - h) / x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        // Reference values from standard tables.
        let cases = [
            (0.1, 9.853_844_780_870_606),
            (1.0, 0.601_907_230_197_234_6),
            (2.0, 0.139_865_881_816_522_4),
            (5.0, 0.004_044_613_445_452_164),
        ];
        for (x, expected) in cases {
            let got = bessel_k1(x);
            assert!(
                ((got - expected) / expected).abs() < 1e-12,
                "K1({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn small_argument_limit() {
        let x = 1e-8;
        assert!((bessel_k1(x) * x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edge_inputs() {
        assert!(bessel_k1(-1.0).is_nan());
        assert_eq!(bessel_k1(0.0), f64::INFINITY);
        assert_eq!(bessel_k1(1000.0), 0.0);
    }
}
