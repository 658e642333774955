//! Pairwise force laws and body forces for the benchmark worlds.
//!
//! A force magnitude is the signed component of the force on the target along
//! the unit vector pointing from the source to the target: negative values
//! attract the target toward the source.

mod bessel;
pub mod catalog;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ChargeVector, ParticleState};
use crate::vec2::Vec2;

pub use bessel::bessel_k1;
pub use catalog::{catalog, lookup, CatalogError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceError {
    #[error("force evaluated at non-positive separation r = {0}")]
    NonPositiveSeparation(f64),
    #[error("law configuration error: {0}")]
    Configuration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    LogGravity,
    Yukawa,
    FractionalPower,
    Coulomb,
    Oscillator,
    ExtraDimensions,
    SpeciesCoupled,
    AnchorCentral,
}

impl LawKind {
    pub const ALL: [LawKind; 8] = [
        LawKind::LogGravity,
        LawKind::Yukawa,
        LawKind::FractionalPower,
        LawKind::Coulomb,
        LawKind::Oscillator,
        LawKind::ExtraDimensions,
        LawKind::SpeciesCoupled,
        LawKind::AnchorCentral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LawKind::LogGravity => "log_gravity",
            LawKind::Yukawa => "yukawa",
            LawKind::FractionalPower => "fractional_power",
            LawKind::Coulomb => "coulomb",
            LawKind::Oscillator => "oscillator",
            LawKind::ExtraDimensions => "extra_dimensions",
            LawKind::SpeciesCoupled => "species_coupled",
            LawKind::AnchorCentral => "anchor_central",
        }
    }

    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            LawKind::LogGravity | LawKind::SpeciesCoupled | LawKind::AnchorCentral => &[],
            LawKind::Yukawa => &["amplitude", "lambda"],
            LawKind::FractionalPower => &["k", "alpha"],
            LawKind::Coulomb => &["k"],
            LawKind::Oscillator => &["G0", "omega", "phase"],
            LawKind::ExtraDimensions => &["G", "L", "image_truncation"],
        }
    }

    /// Whether the magnitude depends on absolute time.
    pub fn is_time_dependent(self) -> bool {
        self == LawKind::Oscillator
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyForceKind {
    UniformDrift,
    HubbleFlow,
}

/// A force supplied by space itself rather than by other particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyForceSpec {
    pub kind: BodyForceKind,
    #[serde(default)]
    pub drift_accel: Vec2,
    #[serde(default)]
    pub hubble_rate: f64,
}

impl BodyForceSpec {
    pub fn uniform_drift(accel: Vec2) -> Self {
        Self {
            kind: BodyForceKind::UniformDrift,
            drift_accel: accel,
            hubble_rate: 0.0,
        }
    }

    pub fn hubble_flow(rate: f64) -> Self {
        Self {
            kind: BodyForceKind::HubbleFlow,
            drift_accel: Vec2::ZERO,
            hubble_rate: rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    pub kind: LawKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_force: Option<BodyForceSpec>,
}

impl LawSpec {
    pub fn new(kind: LawKind) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
            body_force: None,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_body_force(mut self, body: BodyForceSpec) -> Self {
        self.body_force = Some(body);
        self
    }

    pub fn param(&self, name: &str) -> Result<f64, ForceError> {
        self.params.get(name).copied().ok_or_else(|| {
            ForceError::Configuration(format!("{:?} law missing parameter '{name}'", self.kind))
        })
    }

    /// Parameter-set violations: missing, unexpected or non-finite entries.
    pub fn violations(&self) -> Vec<String> {
        let required = self.kind.required_params();
        let mut out = Vec::new();
        for name in required {
            match self.params.get(*name) {
                None => out.push(format!("law {:?} missing required parameter '{name}'", self.kind)),
                Some(v) if !v.is_finite() => {
                    out.push(format!("law parameter '{name}' must be finite"))
                }
                _ => {}
            }
        }
        for name in self.params.keys() {
            if !required.contains(&name.as_str()) {
                out.push(format!("law {:?} does not accept parameter '{name}'", self.kind));
            }
        }
        match self.kind {
            LawKind::Yukawa => {
                if matches!(self.params.get("lambda"), Some(l) if *l <= 0.0) {
                    out.push("yukawa lambda must be positive".to_string());
                }
            }
            LawKind::ExtraDimensions => {
                if matches!(self.params.get("L"), Some(l) if *l <= 0.0) {
                    out.push("extra_dimensions L must be positive".to_string());
                }
                if matches!(self.params.get("image_truncation"), Some(n) if *n < 0.0 || n.fract() != 0.0)
                {
                    out.push("image_truncation must be a nonnegative integer".to_string());
                }
            }
            _ => {}
        }
        if let Some(body) = &self.body_force {
            if !body.drift_accel.is_finite() || !body.hubble_rate.is_finite() {
                out.push("body force payload must be finite".to_string());
            }
        }
        out
    }
}

/// A law with its parameters resolved, ready for the O(N²) inner loop.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledLaw {
    LogGravity,
    Yukawa { amplitude: f64, lambda: f64 },
    FractionalPower { k: f64, exponent: f64 },
    Coulomb { k: f64 },
    Oscillator { g0: f64, omega: f64, phase: f64 },
    ExtraDimensions { g: f64, length: f64, images: usize },
    SpeciesCoupled { couplings: Vec<f64> },
}

impl CompiledLaw {
    pub fn compile(law: &LawSpec, species_table: &[f64]) -> Result<Self, ForceError> {
        let problems = law.violations();
        if !problems.is_empty() {
            return Err(ForceError::Configuration(problems.join("; ")));
        }
        Ok(match law.kind {
            LawKind::LogGravity | LawKind::AnchorCentral => CompiledLaw::LogGravity,
            LawKind::Yukawa => CompiledLaw::Yukawa {
                amplitude: law.param("amplitude")?,
                lambda: law.param("lambda")?,
            },
            LawKind::FractionalPower => CompiledLaw::FractionalPower {
                k: law.param("k")?,
                exponent: 2.0 * law.param("alpha")? - 3.0,
            },
            LawKind::Coulomb => CompiledLaw::Coulomb { k: law.param("k")? },
            LawKind::Oscillator => CompiledLaw::Oscillator {
                g0: law.param("G0")?,
                omega: law.param("omega")?,
                phase: law.param("phase")?,
            },
            LawKind::ExtraDimensions => CompiledLaw::ExtraDimensions {
                g: law.param("G")?,
                length: law.param("L")?,
                images: law.param("image_truncation")? as usize,
            },
            LawKind::SpeciesCoupled => {
                if species_table.is_empty() {
                    return Err(ForceError::Configuration(
                        "species_coupled law requires a species table".to_string(),
                    ));
                }
                CompiledLaw::SpeciesCoupled {
                    couplings: species_table.to_vec(),
                }
            }
        })
    }

    /// Signed magnitude; `r` must already include any softening.
    pub fn magnitude(&self, r: f64, source: &ChargeVector, target: &ChargeVector, t: f64) -> f64 {
        let sc = source.source * target.response;
        match self {
            CompiledLaw::LogGravity => -sc / (2.0 * PI * r),
            CompiledLaw::Yukawa { amplitude, lambda } => {
                -amplitude * sc * bessel_k1(r / lambda) / lambda
            }
            CompiledLaw::FractionalPower { k, exponent } => -k * sc * r.powf(*exponent),
            CompiledLaw::Coulomb { k } => -k * sc / (r * r),
            CompiledLaw::Oscillator { g0, omega, phase } => {
                -(g0 / (2.0 * PI)) * (omega * t + phase).cos() * sc / r
            }
            CompiledLaw::ExtraDimensions { g, length, images } => {
                -g * sc * image_sum(r, *length, *images)
            }
            CompiledLaw::SpeciesCoupled { couplings } => {
                let coupling = couplings.get(source.species).copied().unwrap_or(f64::NAN);
                -coupling * sc / (2.0 * PI * r)
            }
        }
    }
}

/// `Σ_{n=−N..N} r / (r² + (nL)²)^{3/2}` plus a continuum closure for `|n| > N`.
///
/// The images beyond the truncation are replaced by the integral of the same
/// kernel over `|z| > (N + ½)L` plus its leading midpoint correction, so the
/// long-range `2/(rL)` limit survives any finite truncation.
pub fn image_sum(r: f64, length: f64, images: usize) -> f64 {
    let r2 = r * r;
    let mut sum = 1.0 / r2;
    for n in 1..=images {
        let z = n as f64 * length;
        let d2 = r2 + z * z;
        sum += 2.0 * r / (d2 * d2.sqrt());
    }
    let z0 = (images as f64 + 0.5) * length;
    // ∫_{z0}^{∞} r (r² + z²)^{-3/2} dz = (1/r)(1 − z0/√(r² + z0²)); the form
    // r / (√(r²+z0²) (√(r²+z0²) + z0)) avoids cancellation.
    let rho = (r2 + z0 * z0).sqrt();
    let tail = r / (rho * (rho + z0));
    // Midpoint-rule correction: Σ f(nL) ≈ (1/L)∫f + (L/24) f'(z0).
    let slope = -3.0 * r * z0 / rho.powi(5);
    sum + 2.0 * (tail / length + length * slope / 24.0)
}

/// Signed pairwise force magnitude at separation `r` (softening already applied).
pub fn force_magnitude(
    law: &LawSpec,
    species_table: &[f64],
    r: f64,
    q_source: &ChargeVector,
    q_target: &ChargeVector,
    t: f64,
) -> Result<f64, ForceError> {
    if !(r > 0.0) {
        return Err(ForceError::NonPositiveSeparation(r));
    }
    Ok(CompiledLaw::compile(law, species_table)?.magnitude(r, q_source, q_target, t))
}

/// Acceleration supplied by space itself; independent of charge and inertia.
pub fn body_acceleration(spec: &BodyForceSpec, state: &ParticleState, _t: f64) -> Vec2 {
    match spec.kind {
        BodyForceKind::UniformDrift => spec.drift_accel,
        BodyForceKind::HubbleFlow => state.position * spec.hubble_rate,
    }
}

/// Pairwise-plus-body acceleration field over a full particle set.
#[derive(Debug, Clone)]
pub struct ForceField {
    pub law: CompiledLaw,
    pub body_force: Option<BodyForceSpec>,
    pub softening: f64,
}

impl ForceField {
    pub fn new(law: &LawSpec, species_table: &[f64], softening: f64) -> Result<Self, ForceError> {
        Ok(Self {
            law: CompiledLaw::compile(law, species_table)?,
            body_force: law.body_force,
            softening,
        })
    }

    /// Acceleration of `particles[target]` due to every other particle and the body force.
    pub fn acceleration_on(&self, particles: &[ParticleState], target: usize, t: f64) -> Vec2 {
        let me = &particles[target];
        let mut accel = Vec2::ZERO;
        if me.charge.response != 0.0 {
            let eps2 = self.softening * self.softening;
            for (j, other) in particles.iter().enumerate() {
                if j == target || other.charge.source == 0.0 {
                    continue;
                }
                let sep = me.position - other.position;
                let r_eff = (sep.norm_squared() + eps2).sqrt();
                if r_eff == 0.0 {
                    continue;
                }
                let f = self.law.magnitude(r_eff, &other.charge, &me.charge, t);
                accel += sep * (f / r_eff);
            }
            accel = accel * (1.0 / me.inertia);
        }
        if let Some(body) = &self.body_force {
            accel += body_acceleration(body, me, t);
        }
        accel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_charges(s: f64, c: f64) -> (ChargeVector, ChargeVector) {
        (ChargeVector::new(s, 0.0), ChargeVector::probe(c))
    }

    #[test]
    fn anchor_central_matches_listing_constant() {
        let law = LawSpec::new(LawKind::AnchorCentral);
        let (src, tgt) = unit_charges(50.0, 1.0);
        let f = force_magnitude(&law, &[], 5.0, &src, &tgt, 0.0).unwrap();
        assert!((f + 50.0 / (2.0 * PI) / 5.0).abs() < 1e-14);
        assert!((f + 1.591).abs() < 1e-3);
    }

    #[test]
    fn oscillator_reverses_at_half_period() {
        let law = LawSpec::new(LawKind::Oscillator)
            .with_param("G0", 5.0)
            .with_param("omega", PI / 2.0)
            .with_param("phase", 0.0);
        let (src, tgt) = unit_charges(1.0, 1.0);
        let f0 = force_magnitude(&law, &[], 3.0, &src, &tgt, 0.0).unwrap();
        let f2 = force_magnitude(&law, &[], 3.0, &src, &tgt, 2.0).unwrap();
        assert!((f2 - 5.0 / (2.0 * PI * 3.0)).abs() < 1e-12);
        assert!((f0 + f2).abs() < 1e-12);
    }

    #[test]
    fn coulomb_product_of_charges() {
        let law = LawSpec::new(LawKind::Coulomb).with_param("k", 1.0);
        let f = force_magnitude(
            &law,
            &[],
            1.0,
            &ChargeVector::new(2.0, 0.0),
            &ChargeVector::probe(3.0),
            0.0,
        )
        .unwrap();
        assert_eq!(f, -6.0);
    }

    #[test]
    fn rejects_non_positive_separation() {
        let law = LawSpec::new(LawKind::LogGravity);
        let (src, tgt) = unit_charges(1.0, 1.0);
        assert_eq!(
            force_magnitude(&law, &[], 0.0, &src, &tgt, 0.0),
            Err(ForceError::NonPositiveSeparation(0.0))
        );
        assert!(force_magnitude(&law, &[], -1.0, &src, &tgt, 0.0).is_err());
    }

    #[test]
    fn missing_parameter_is_configuration_error() {
        let law = LawSpec::new(LawKind::Yukawa).with_param("lambda", 2.0);
        let (src, tgt) = unit_charges(1.0, 1.0);
        assert!(matches!(
            force_magnitude(&law, &[], 1.0, &src, &tgt, 0.0),
            Err(ForceError::Configuration(_))
        ));
    }

    #[test]
    fn unknown_kind_rejected_at_parse() {
        let bad = r#"{"kind": "modified_newton", "params": {}}"#;
        assert!(serde_json::from_str::<LawSpec>(bad).is_err());
    }

    #[test]
    fn species_coupling_sign() {
        let law = LawSpec::new(LawKind::SpeciesCoupled);
        let table = [1.0, 3.0, -2.0];
        let tgt = ChargeVector::probe(1.0);
        let mags: Vec<f64> = (0..3)
            .map(|s| {
                let src = ChargeVector::new(1.0, 1.0).with_species(s);
                force_magnitude(&law, &table, 2.0, &src, &tgt, 0.0).unwrap()
            })
            .collect();
        let base = -1.0 / (2.0 * PI * 2.0);
        assert!((mags[0] - base).abs() < 1e-15);
        assert!((mags[1] - 3.0 * base).abs() < 1e-15);
        assert!(mags[2] > 0.0, "repulsive species must push outward");
    }

    #[test]
    fn body_accelerations() {
        let hubble = BodyForceSpec::hubble_flow(0.05);
        let at = |x, y| ParticleState::at_rest(Vec2::new(x, y), ChargeVector::probe(1.0), 3.0);
        let a = body_acceleration(&hubble, &at(10.0, 0.0), 0.0);
        assert!((a - Vec2::new(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(body_acceleration(&hubble, &at(0.0, 0.0), 0.0), Vec2::ZERO);
        let drift = BodyForceSpec::uniform_drift(Vec2::new(0.0, 0.3));
        assert_eq!(body_acceleration(&drift, &at(-7.0, 2.0), 4.0), Vec2::new(0.0, 0.3));
    }

    #[test]
    fn neutral_probe_exerts_nothing() {
        let field = ForceField::new(&LawSpec::new(LawKind::LogGravity), &[], 1e-3).unwrap();
        let particles = [
            ParticleState::at_rest(Vec2::new(0.0, 0.0), ChargeVector::new(1.0, 0.0), 1.0),
            ParticleState::at_rest(Vec2::new(2.0, 0.0), ChargeVector::probe(1.0), 1.0),
        ];
        assert_eq!(field.acceleration_on(&particles, 0, 0.0), Vec2::ZERO);
        let a = field.acceleration_on(&particles, 1, 0.0);
        assert!(a.x < 0.0 && a.y == 0.0);
    }
}
