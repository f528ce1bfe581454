mod common;

use common::{curve_shape, harvest_case, random_concave_knots};
use ehsn_core::energy::{
    harvest, power_density_at, Battery, ChargeCurve, CurveError, IncidentField, Interpolation, NW_PER_CM2,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(density_nw: f64, aperture: f64) -> IncidentField {
    IncidentField::new(density_nw * NW_PER_CM2, "src", aperture).unwrap()
}

#[test]
fn tenth_milliwatt_at_quarter_meter() {
    let d = power_density_at(1e-4, 0.25, 1.0).unwrap() / NW_PER_CM2;
    assert!((d / 12.7 - 1.0).abs() <= 0.01, "{d}");
}

#[test]
fn coarse_step_matches_tenth_step_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let (got, expected) = harvest_case(&mut rng);
        assert!(expected > 0.0);
        assert!(((got - expected) / expected).abs() <= 0.01, "case {case}: {got} vs {expected}");
    }
}

#[test]
fn same_energy_in_different_order_leaves_different_residuals() {
    let curve = ChargeCurve::default();
    let battery = Battery::new(0.2e-6, 1e-6, 0.0).unwrap();
    let f = field(100.0, 1.0);
    // 0.5 µJ incident and the same 0.15 µJ draw, in opposite orders; neither
    // order comes near capacity
    let charged = harvest(&battery, &curve, &f, 5.0, 0.01).unwrap().battery;
    let drained = harvest(&battery.consume(0.15e-6).unwrap(), &curve, &f, 5.0, 0.01).unwrap().battery;
    assert!(charged.residual() < 0.6e-6);
    let harvest_first = charged.consume(0.15e-6).unwrap();
    // draining first leaves the node lower on the curve, where it is less efficient
    assert!(harvest_first.residual() - drained.residual() > 1e-9);
}

#[test]
fn long_random_walk_stays_clamped() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let curve = ChargeCurve::default();
    let capacity = 1e-6;
    let mut b = Battery::new(0.5 * capacity, capacity, 0.1 * capacity).unwrap();
    for i in 0..100_000 {
        let before = b.residual();
        if rng.random_bool(0.5) {
            let f = field(rng.random_range(0.0..2000.0), 2.0);
            let duration = rng.random_range(0.01..5.0);
            let out = harvest(&b, &curve, &f, duration, duration).unwrap();
            assert!(out.harvested >= 0.0 && out.harvested <= f.power() * duration, "step {i}");
            b = out.battery;
        } else {
            b = b.consume(rng.random_range(0.0..0.3) * capacity).unwrap();
            assert!(b.residual() <= before);
        }
        assert!((0.0..=capacity).contains(&b.residual()), "step {i}: {}", b.residual());
    }
}

#[test]
fn non_concave_and_monotone_curves_are_rejected() {
    let bump = ChargeCurve::new(&[(0.0, 0.2), (0.3, 0.3), (0.6, 0.6), (1.0, 0.1)], Interpolation::Linear);
    assert!(matches!(bump, Err(CurveError::NotConcave { .. })));
    let rising = ChargeCurve::new(&[(0.0, 0.1), (0.5, 0.4), (1.0, 0.5)], Interpolation::Linear);
    assert_eq!(rising, Err(CurveError::NoInteriorMaximum));
}

proptest! {
    #[test]
    fn constructed_curves_are_concave_with_interior_peak(
        points in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 3..8),
        cubic in any::<bool>(),
    ) {
        let mut points = points;
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let interpolation = if cubic { Interpolation::MonotoneCubic } else { Interpolation::Linear };
        if let Ok(curve) = ChargeCurve::new(&points, interpolation) {
            prop_assert_eq!(curve_shape(&curve), Ok(()));
        }
    }

    #[test]
    fn generated_curves_are_accepted(seed in any::<u64>(), cubic in any::<bool>()) {
        let knots = random_concave_knots(&mut ChaCha8Rng::seed_from_u64(seed));
        let interpolation = if cubic { Interpolation::MonotoneCubic } else { Interpolation::Linear };
        let curve = ChargeCurve::new(&knots, interpolation).unwrap();
        prop_assert_eq!(curve_shape(&curve), Ok(()));
        for i in 0..=100 {
            let v = curve.eval(i as f64 / 100.0);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    /// Any sequence of charging and draining keeps the residual inside
    /// `[0, capacity]`, and charging never removes energy.
    #[test]
    fn random_walk_stays_clamped(
        start in 0.0f64..=1.0,
        ops in prop::collection::vec((any::<bool>(), 0.0f64..2.0, 0.1f64..100.0), 1..40),
    ) {
        let capacity = 1e-6;
        let curve = ChargeCurve::default();
        let mut b = Battery::new(start * capacity, capacity, 0.1 * capacity).unwrap();
        for (charge, amount, density) in ops {
            let before = b.residual();
            if charge {
                let out = harvest(&b, &curve, &field(density, 2.0), amount * 100.0 + 1.0, 1.0).unwrap();
                prop_assert!(out.harvested >= 0.0);
                prop_assert!((out.battery.residual() - before - out.harvested).abs() <= 1e-18);
                b = out.battery;
            } else {
                b = b.consume(amount * capacity * 0.5).unwrap();
                prop_assert!(b.residual() <= before);
            }
            prop_assert!((0.0..=capacity).contains(&b.residual()));
            prop_assert_eq!(b.is_alive(), b.residual() >= 0.1 * capacity);
        }
    }

    /// Longer exposure never harvests less, and the stored energy is bounded
    /// by incident energy times the curve's extreme efficiencies.
    #[test]
    fn harvest_is_monotone_and_bounded(
        start in 0.0f64..0.95,
        density in 0.18f64..84.0,
        steps in 1usize..60,
        extra in 1usize..60,
    ) {
        let capacity = 1e-6;
        let curve = ChargeCurve::default();
        let b = Battery::new(start * capacity, capacity, 0.0).unwrap();
        let f = field(density, 2.0);
        let short = harvest(&b, &curve, &f, steps as f64, 1.0).unwrap();
        let long = harvest(&b, &curve, &f, (steps + extra) as f64, 1.0).unwrap();
        prop_assert!(long.harvested >= short.harvested);
        let incident = f.power() * steps as f64;
        prop_assert!(short.harvested <= incident * curve.peak().1 * (1.0 + 1e-9));
        if short.battery.residual() < capacity {
            prop_assert!(short.harvested >= incident * curve.min_efficiency() * (1.0 - 1e-9));
        }
    }

    #[test]
    fn density_falls_with_the_square_of_distance(power in 1e-6f64..1.0, d in 0.01f64..100.0, gain in 1.0f64..10.0) {
        let near = power_density_at(power, d, gain).unwrap();
        let far = power_density_at(power, 2.0 * d, gain).unwrap();
        prop_assert!((near / far - 4.0).abs() < 1e-9);
        let unit_gain = power_density_at(power, d, 1.0).unwrap();
        prop_assert!((near / unit_gain - gain).abs() < 1e-9 * gain);
    }
}
