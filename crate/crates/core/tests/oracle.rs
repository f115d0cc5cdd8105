use std::f64::consts::PI;

use surro_core::climate::default_suite;
use surro_core::oracle::simulate_weekly_energy;
use surro_core::rng::SplitMix64;
use surro_core::sampling::{lhs_sample, DesignSpace};
use surro_core::weather::{window_weeks, WeatherMatrix, HOURS_PER_WEEK};

/// Deterministic cold week, no PRNG involved.
fn reference_cold_week() -> WeatherMatrix {
    let mut data = Vec::new();
    for h in 0..HOURS_PER_WEEK {
        let hod = (h % 24) as f64;
        let t = -15.0 + 5.0 * (2.0 * PI * (hod - 9.0) / 24.0).sin();
        let ghi = if hod > 6.0 && hod < 18.0 {
            400.0 * (PI * (hod - 6.0) / 12.0).sin()
        } else {
            0.0
        };
        let wind = 4.0 + 2.0 * (2.0 * PI * h as f64 / 168.0).sin();
        data.extend([t, 70.0, ghi, wind]);
    }
    WeatherMatrix::from_vec(HOURS_PER_WEEK, 4, data).unwrap()
}

#[test]
fn midpoint_cold_week_regression() {
    // Evaluated independently from the closed form in a separate script.
    let kwh = simulate_weekly_energy(&DesignSpace::standard().midpoint(), &reference_cold_week()).unwrap();
    assert!((kwh - 8266.43385930368).abs() < 1e-7, "{kwh}");
}

#[test]
fn every_parameter_moves_annual_energy() {
    let space = DesignSpace::standard();
    let weeks = window_weeks(&default_suite()[4].generate().unwrap());
    let annual = |b| weeks.iter().map(|w| simulate_weekly_energy(&b, &w.values).unwrap()).sum::<f64>();
    let mid = space.midpoint();
    let base = annual(mid);
    for (i, p) in space.params().iter().enumerate() {
        let mut b = mid;
        b.0[i] = p.hi;
        let d = annual(b) - base;
        assert!(d != 0.0 && d.is_finite(), "{} has no effect", p.name);
    }
}

#[test]
fn fuzz_finite_non_negative() {
    let designs = lhs_sample(&DesignSpace::standard(), 10_000, 42).unwrap();
    let mut rng = SplitMix64::new(7);
    for d in &designs {
        let data: Vec<f64> = (0..HOURS_PER_WEEK)
            .flat_map(|_| {
                [rng.uniform(-50.0, 45.0), rng.uniform(0.0, 100.0), rng.uniform(0.0, 1100.0), rng.uniform(0.0, 25.0)]
            })
            .collect();
        let w = WeatherMatrix::from_vec(HOURS_PER_WEEK, 4, data).unwrap();
        let kwh = simulate_weekly_energy(d, &w).unwrap();
        assert!(kwh.is_finite() && kwh >= 0.0);
    }
}
