//! Closed-form degree-balance building energy oracle.
//!
//! Each hour is balanced independently (no thermal mass): envelope
//! conductance against a sol-air-weighted outdoor temperature, window solar
//! gains and internal equipment gains, with heating and cooling loads
//! converted through fixed plant efficiencies. The constants below are part
//! of the fixture contract; changing any of them changes every dataset.

use std::f64::consts::PI;

use crate::sampling::{param, DesignSpace, DesignVector};
use crate::weather::{WeatherMatrix, N_FEATURES};
use crate::{Error, Result};

pub const FLOOR_AREA_M2: f64 = 3000.0;
pub const WALL_AREA_M2: f64 = 1000.0;
pub const ROOF_AREA_M2: f64 = 600.0;
pub const BASE_WINDOW_WALL_RATIO: f64 = 0.33;
pub const K_INSULATION: f64 = 0.04;
pub const K_STRUCTURE: f64 = 1.4;
pub const BASE_FILM_RESISTANCE: f64 = 0.3;
pub const OUTSIDE_FILM_COEFF: f64 = 17.0;
pub const INFILTRATION_UA: f64 = 150.0;
pub const INFILTRATION_WIND_COEFF: f64 = 0.05;
pub const HEATING_EFFICIENCY: f64 = 0.9;
pub const COOLING_COP: f64 = 3.0;
pub const LIGHTING_WM2: f64 = 8.0;
/// Cooling picks up internal gains once the envelope temperature is this
/// close to the cooling setpoint.
pub const COOLING_GAIN_BAND_C: f64 = 2.0;

/// Solar-gain orientation factor in `[0.6, 1.0]`, 360°-periodic: full gain
/// at 0°, minimum at 180°.
pub fn orientation_factor(north_axis_deg: f64) -> f64 {
    0.8 + 0.2 * (north_axis_deg * PI / 180.0).cos()
}

/// Per-design quantities that do not depend on the weather.
#[derive(Debug, Clone, Copy)]
struct Envelope {
    ua_wall: f64,
    ua_roof: f64,
    ua_window: f64,
    wall_abs: f64,
    roof_abs: f64,
    solar_aperture: f64,
    internal_w: f64,
    lighting_w: f64,
    heat_set: f64,
    cool_set: f64,
}

impl Envelope {
    fn new(b: &DesignVector) -> Self {
        let glazing_m2 = BASE_WINDOW_WALL_RATIO * b.get(param::WINDOW_SCALE) * WALL_AREA_M2;
        let u_wall = 1.0
            / (BASE_FILM_RESISTANCE
                + b.get(param::WALL_INSULATION) / K_INSULATION
                + b.get(param::WALL_THICKNESS) / K_STRUCTURE);
        let u_roof = 1.0
            / (BASE_FILM_RESISTANCE
                + b.get(param::ROOF_INSULATION) / K_INSULATION
                + b.get(param::ROOF_THICKNESS) / K_STRUCTURE);
        Self {
            ua_wall: u_wall * (WALL_AREA_M2 - glazing_m2),
            ua_roof: u_roof * ROOF_AREA_M2,
            ua_window: b.get(param::WINDOW_U) * glazing_m2,
            wall_abs: b.get(param::WALL_ABSORPTANCE),
            roof_abs: b.get(param::ROOF_ABSORPTANCE),
            solar_aperture: b.get(param::WINDOW_SHGC)
                * glazing_m2
                * orientation_factor(b.get(param::NORTH_AXIS)),
            internal_w: b.get(param::EQUIPMENT_GAIN) * FLOOR_AREA_M2,
            lighting_w: LIGHTING_WM2
                * FLOOR_AREA_M2
                * (1.0 - 0.3 * b.get(param::VISIBLE_TRANSMITTANCE) * b.get(param::WINDOW_SCALE)),
            heat_set: b.get(param::HEATING_SETPOINT),
            cool_set: b.get(param::COOLING_SETPOINT),
        }
    }

    /// Electrical + fuel power drawn in one hour, in watts.
    fn hourly_w(&self, drybulb: f64, ghi: f64, wind: f64) -> f64 {
        let ua_inf = INFILTRATION_UA * (1.0 + INFILTRATION_WIND_COEFF * wind);
        let ua = self.ua_wall + self.ua_roof + self.ua_window + ua_inf;
        let t_sa_wall = drybulb + self.wall_abs * ghi / OUTSIDE_FILM_COEFF;
        let t_sa_roof = drybulb + self.roof_abs * ghi / OUTSIDE_FILM_COEFF;
        let t_env = (self.ua_wall * t_sa_wall
            + self.ua_roof * t_sa_roof
            + (self.ua_window + ua_inf) * drybulb)
            / ua;
        let q_sol = self.solar_aperture * ghi;
        let q_int = self.internal_w;

        let heating = (ua * (self.heat_set - t_env) - q_sol - q_int).max(0.0) / HEATING_EFFICIENCY;
        let gains_in_cooling = if t_env > self.cool_set - COOLING_GAIN_BAND_C {
            q_int
        } else {
            0.0
        };
        let cooling = (ua * (t_env - self.cool_set) + q_sol + gains_in_cooling).max(0.0) / COOLING_COP;
        let lighting = if ghi > 0.0 { self.lighting_w } else { 0.0 };
        heating + cooling + lighting + q_int
    }
}

/// Weekly (or any-length) energy use in kWh for a raw-unit weather matrix
/// whose columns are drybulb, humidity, irradiance and wind.
pub fn simulate_weekly_energy(b: &DesignVector, raw_week: &WeatherMatrix) -> Result<f64> {
    DesignSpace::standard().check(b)?;
    if raw_week.cols() != N_FEATURES {
        return Err(Error::Shape(format!(
            "oracle expects {N_FEATURES} weather features, got {}",
            raw_week.cols()
        )));
    }
    let env = Envelope::new(b);
    let mut wh = 0.0;
    for r in 0..raw_week.rows() {
        let row = raw_week.row(r);
        wh += env.hourly_w(row[0], row[2], row[3]);
    }
    Ok(wh / 1000.0)
}

/// Oracle targets for every `(design, week)` pair, design-major.
pub fn simulate_grid(designs: &[DesignVector], weeks: &[&WeatherMatrix]) -> Result<Vec<Vec<f64>>> {
    designs
        .iter()
        .map(|d| weeks.iter().map(|w| simulate_weekly_energy(d, w)).collect())
        .collect()
}
