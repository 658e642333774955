//! Force-law checks against independent numerical oracles, catalog contents
//! and structural invariants of the pairwise field.

use std::f64::consts::PI;

use proptest::prelude::*;

use lawforge_core::forcelaws::catalog::lookup;
use lawforge_core::forcelaws::{bessel_k1, force_magnitude, image_sum, ForceField, LawKind, LawSpec};
use lawforge_core::{validate_world, ChargeVector, ParticleState, Topology, Vec2};

/// `K₁(x) = ∫₀^∞ exp(−x cosh t) cosh t dt`, by composite Simpson on [0, 12].
fn k1_by_quadrature(x: f64) -> f64 {
    let (upper, n) = (12.0, 40_000);
    let h = upper / n as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * t.cosh();
    let mut sum = f(0.0) + f(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

/// Direct image sum over `|n| ≤ m` with no continuum closure.
fn brute_image_sum(r: f64, length: f64, m: i64) -> f64 {
    (-m..=m)
        .map(|n| {
            let z = n as f64 * length;
            r / (r * r + z * z).powf(1.5)
        })
        .sum()
}

fn unit_pair() -> (ChargeVector, ChargeVector) {
    (ChargeVector::new(1.0, 0.0), ChargeVector::probe(1.0))
}

#[test]
fn bessel_k1_matches_integral_representation() {
    for x in [0.05, 0.5, 1.0, 2.0, 3.7, 8.0, 20.0] {
        let oracle = k1_by_quadrature(x);
        let got = bessel_k1(x);
        assert!(((got - oracle) / oracle).abs() < 1e-9, "K1({x}) = {got}, quadrature {oracle}");
    }
}

#[test]
fn yukawa_ratio_matches_quadrature_oracle() {
    let law = LawSpec::new(LawKind::Yukawa)
        .with_param("amplitude", 1.0 / (2.0 * PI))
        .with_param("lambda", 2.0);
    let (src, tgt) = unit_pair();
    let f4 = force_magnitude(&law, &[], 4.0, &src, &tgt, 0.0).unwrap();
    let f2 = force_magnitude(&law, &[], 2.0, &src, &tgt, 0.0).unwrap();
    let oracle = k1_by_quadrature(2.0) / k1_by_quadrature(1.0);
    assert!((f4 / f2 - oracle).abs() < 1e-9, "ratio {} vs {oracle}", f4 / f2);
    assert!(f2 < 0.0 && f4 < 0.0);
}

#[test]
fn image_sum_matches_brute_force() {
    for r in [0.01, 0.3, 1.0, 4.0, 30.0, 100.0] {
        let brute = brute_image_sum(r, 1.0, 400_000);
        let got = image_sum(r, 1.0, 50);
        assert!(((got - brute) / brute).abs() < 1e-6, "r = {r}: {got} vs {brute}");
    }
}

#[test]
fn extra_dimensions_crossover_slopes() {
    let world = lookup("extra_dimensions").unwrap();
    let length = world.law.params["L"];
    let (src, tgt) = unit_pair();
    let log_slope = |r: f64| {
        let d = 1e-4;
        let f = |r: f64| force_magnitude(&world.law, &[], r, &src, &tgt, 0.0).unwrap().abs().ln();
        (f(r * (1.0 + d)) - f(r * (1.0 - d))) / ((1.0 + d).ln() - (1.0 - d).ln())
    };
    let short = log_slope(length / 100.0);
    let long = log_slope(100.0 * length);
    assert!((-2.05..=-1.95).contains(&short), "short-range slope {short}");
    assert!((-1.05..=-0.95).contains(&long), "long-range slope {long}");
}

#[test]
fn ether_world_is_valid() {
    let world = lookup("ether").unwrap();
    assert_eq!(validate_world(&world), Vec::<String>::new());
    assert_eq!(world.roster[0].charge.source, 50.0);
    assert_eq!(world.roster.len(), 21);
    assert_eq!(world.agent_slots, 5);
}

#[test]
fn two_particle_world_with_three_slots_is_rejected() {
    let mut world = lookup("gravity").unwrap();
    world.agent_slots = 3;
    let problems = validate_world(&world);
    assert_eq!(problems.len(), 1, "{problems:?}");
    assert!(problems[0].contains("agent_slots"));
}

#[test]
fn out_of_table_species_are_each_reported() {
    let mut world = lookup("ether").unwrap();
    world.roster[2].charge.species = 7;
    world.roster[5].charge.species = 3;
    let problems = validate_world(&world);
    assert_eq!(problems.len(), 2, "{problems:?}");
}

#[test]
fn three_species_roster() {
    let world = lookup("three_species").unwrap();
    assert_eq!(world.topology, Topology::ProbeOnly);
    assert_eq!(world.roster.len(), 30);
    assert_eq!(world.agent_slots, 5);
    assert_eq!(world.species_table, vec![1.0, 3.0, -2.0]);
    for s in 0..3 {
        assert_eq!(world.roster.iter().filter(|p| p.charge.species == s).count(), 10);
    }
}

#[test]
fn dark_matter_roster() {
    let world = lookup("dark_matter").unwrap();
    assert_eq!(world.roster.len(), 30);
    assert_eq!(world.visible_count, 20);
    assert_eq!(world.agent_slots, 5);
}

#[test]
fn unknown_world_is_not_found() {
    assert!(lookup("nonexistent").is_err());
}

fn law_kind() -> impl Strategy<Value = LawSpec> {
    prop_oneof![
        Just(LawSpec::new(LawKind::LogGravity)),
        Just(LawSpec::new(LawKind::Coulomb).with_param("k", 1.0)),
        Just(
            LawSpec::new(LawKind::Yukawa)
                .with_param("amplitude", 0.3)
                .with_param("lambda", 2.0)
        ),
        Just(
            LawSpec::new(LawKind::FractionalPower)
                .with_param("k", 0.2)
                .with_param("alpha", 0.75)
        ),
        Just(
            LawSpec::new(LawKind::ExtraDimensions)
                .with_param("G", 0.1)
                .with_param("L", 1.0)
                .with_param("image_truncation", 50.0)
        ),
    ]
}

proptest! {
    #[test]
    fn equal_bodies_feel_opposite_accelerations(
        law in law_kind(),
        x in -10.0..10.0f64, y in -10.0..10.0f64,
        dx in 0.2..8.0f64, dy in -8.0..8.0f64,
        q in 0.1..4.0f64,
    ) {
        let field = ForceField::new(&law, &[], 1e-3).unwrap();
        let particles = [
            ParticleState::at_rest(Vec2::new(x, y), ChargeVector::symmetric(q), 2.0),
            ParticleState::at_rest(Vec2::new(x + dx, y + dy), ChargeVector::symmetric(q), 2.0),
        ];
        let a0 = field.acceleration_on(&particles, 0, 0.0);
        let a1 = field.acceleration_on(&particles, 1, 0.0);
        prop_assert!((a0 + a1).norm() <= 1e-12 * a0.norm().max(1e-300));
        // Symmetric positive charges attract: each body accelerates toward the other.
        prop_assert!(a0.dot(particles[1].position - particles[0].position) > 0.0);
    }

    #[test]
    fn magnitude_is_bilinear_in_charges(
        law in law_kind(),
        r in 0.05..50.0f64,
        s in 0.1..5.0f64, c in 0.1..5.0f64,
    ) {
        let unit = force_magnitude(&law, &[], r, &ChargeVector::new(1.0, 0.0), &ChargeVector::probe(1.0), 0.0).unwrap();
        let scaled = force_magnitude(&law, &[], r, &ChargeVector::new(s, 0.0), &ChargeVector::probe(c), 0.0).unwrap();
        prop_assert!((scaled - s * c * unit).abs() <= 1e-12 * (s * c * unit).abs());
    }

    #[test]
    fn sourceless_particles_exert_nothing(law in law_kind(), x in 0.5..10.0f64, c in 0.1..5.0f64) {
        let field = ForceField::new(&law, &[], 1e-3).unwrap();
        let particles = [
            ParticleState::at_rest(Vec2::ZERO, ChargeVector::new(1.0, 1.0), 1.0),
            ParticleState::at_rest(Vec2::new(x, 0.0), ChargeVector::probe(c), 1.0),
        ];
        prop_assert_eq!(field.acceleration_on(&particles, 0, 0.0), Vec2::ZERO);
    }
}
