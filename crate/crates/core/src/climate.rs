//! Parameterised synthetic climates standing in for real TMY files.
//!
//! Dry-bulb temperature follows a seasonal cosine (coldest on day 0) plus a
//! diurnal sine peaking mid-afternoon. Irradiance is a clear-sky half sine
//! between 06:00 and 18:00 scaled by season. Temperature, humidity and wind
//! carry seeded noise made of two parts: a synoptic component that linearly
//! interpolates one uniform draw per day across the day's hours, and an
//! independent hourly jitter. Both are bounded by their amplitudes times
//! `noise_scale`.

use std::f64::consts::PI;
use std::path::Path;

use crate::conf::ConfigFile;
use crate::rng::SplitMix64;
use crate::weather::{HourRecord, HourlyWeatherYear, HOURS_PER_YEAR};
use crate::{Error, Result};

const DAYS: usize = HOURS_PER_YEAR / 24;

/// (synoptic, hourly) noise amplitudes before `noise_scale`.
const TEMP_NOISE: (f64, f64) = (4.0, 0.5);
const RH_NOISE: (f64, f64) = (15.0, 3.0);
const WIND_NOISE: (f64, f64) = (2.0, 0.6);

const PEAK_GHI: f64 = 950.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClimateZoneSpec {
    pub zone_id: String,
    pub mean_temp_c: f64,
    pub seasonal_amplitude_c: f64,
    pub diurnal_amplitude_c: f64,
    pub humidity_base_pct: f64,
    pub wind_base_ms: f64,
    pub noise_scale: f64,
}

impl ClimateZoneSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mean_temp_c", self.mean_temp_c),
            ("seasonal_amplitude_c", self.seasonal_amplitude_c),
            ("diurnal_amplitude_c", self.diurnal_amplitude_c),
            ("humidity_base_pct", self.humidity_base_pct),
            ("wind_base_ms", self.wind_base_ms),
            ("noise_scale", self.noise_scale),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be finite")));
        }
        if self.seasonal_amplitude_c < 0.0 {
            return Err(Error::InvalidArgument("seasonal_amplitude_c must be >= 0".into()));
        }
        if self.diurnal_amplitude_c < 0.0 {
            return Err(Error::InvalidArgument("diurnal_amplitude_c must be >= 0".into()));
        }
        if !(0.0..=100.0).contains(&self.humidity_base_pct) {
            return Err(Error::InvalidArgument("humidity_base_pct must be in [0, 100]".into()));
        }
        if self.wind_base_ms < 0.0 || self.noise_scale < 0.0 {
            return Err(Error::InvalidArgument(
                "wind_base_ms and noise_scale must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A named location: a zone spec plus the seed of its weather stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSpec {
    pub location_id: String,
    pub climate: ClimateZoneSpec,
    pub seed: u64,
}

impl LocationSpec {
    pub fn generate(&self) -> Result<HourlyWeatherYear> {
        Ok(synth_climate(&self.climate, self.seed)?.with_location_id(&self.location_id))
    }

    /// The alternate year used for validation and same-location testing.
    pub fn generate_alternate(&self) -> Result<HourlyWeatherYear> {
        Ok(synth_climate(&self.climate, self.seed.wrapping_add(1))?
            .with_location_id(&self.location_id))
    }
}

struct NoiseTrack {
    daily: Vec<f64>,
    rng: SplitMix64,
    synoptic: f64,
    hourly: f64,
}

impl NoiseTrack {
    fn new(seed: u64, stream: u64, (synoptic, hourly): (f64, f64), scale: f64) -> Self {
        let mut rng = SplitMix64::stream(seed, stream);
        let daily = (0..=DAYS).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Self {
            daily,
            rng,
            synoptic: synoptic * scale,
            hourly: hourly * scale,
        }
    }

    fn at(&mut self, day: usize, hour_of_day: usize) -> f64 {
        let frac = hour_of_day as f64 / 24.0;
        let slow = self.daily[day] + (self.daily[day + 1] - self.daily[day]) * frac;
        self.synoptic * slow + self.hourly * self.rng.uniform(-1.0, 1.0)
    }
}

/// Clear-sky global horizontal irradiance for an hour of the year.
pub fn clear_sky_ghi(day: usize, hour_of_day: usize) -> f64 {
    if !(6..=18).contains(&hour_of_day) {
        return 0.0;
    }
    let season = 0.6 + 0.4 * (1.0 - (2.0 * PI * day as f64 / 365.0).cos()) / 2.0;
    (PEAK_GHI * (PI * (hour_of_day as f64 - 6.0) / 12.0).sin()).max(0.0) * season
}

/// Deterministic synthetic year for `(spec, seed)`.
pub fn synth_climate(spec: &ClimateZoneSpec, seed: u64) -> Result<HourlyWeatherYear> {
    spec.validate()?;
    let mut temp = NoiseTrack::new(seed, 1, TEMP_NOISE, spec.noise_scale);
    let mut rh = NoiseTrack::new(seed, 2, RH_NOISE, spec.noise_scale);
    let mut wind = NoiseTrack::new(seed, 3, WIND_NOISE, spec.noise_scale);

    let hours = (0..HOURS_PER_YEAR)
        .map(|h| {
            let day = h / 24;
            let hod = h % 24;
            let seasonal = spec.seasonal_amplitude_c * (2.0 * PI * day as f64 / 365.0).cos();
            let diurnal = spec.diurnal_amplitude_c * (2.0 * PI * (hod as f64 - 9.0) / 24.0).sin();
            HourRecord {
                drybulb_c: spec.mean_temp_c - seasonal + diurnal + temp.at(day, hod),
                rel_humidity_pct: (spec.humidity_base_pct + rh.at(day, hod)).clamp(0.0, 100.0),
                ghi_whm2: clear_sky_ghi(day, hod),
                wind_ms: (spec.wind_base_ms + wind.at(day, hod)).max(0.0),
            }
        })
        .collect();
    HourlyWeatherYear::new(format!("{}-{seed}", spec.zone_id), hours)
}

const ZONE_FIELDS: [&str; 6] = [
    "mean_temp_c",
    "seasonal_amplitude_c",
    "diurnal_amplitude_c",
    "humidity_base_pct",
    "wind_base_ms",
    "noise_scale",
];

/// Parses a climate manifest: one `[location_id]` section per location with
/// `zone`, the six zone fields and `seed`.
pub fn parse_manifest(conf: &ConfigFile) -> Result<Vec<LocationSpec>> {
    let mut out = Vec::new();
    for section in conf.sections() {
        let zone_id = conf.require_str(section, "zone")?.to_string();
        let mut vals = [0.0; 6];
        for (v, key) in vals.iter_mut().zip(ZONE_FIELDS) {
            *v = conf.require(section, key)?;
        }
        let climate = ClimateZoneSpec {
            zone_id,
            mean_temp_c: vals[0],
            seasonal_amplitude_c: vals[1],
            diurnal_amplitude_c: vals[2],
            humidity_base_pct: vals[3],
            wind_base_ms: vals[4],
            noise_scale: vals[5],
        };
        climate
            .validate()
            .map_err(|e| conf.err(format!("[{section}] {e}")))?;
        out.push(LocationSpec {
            location_id: section.to_string(),
            climate,
            seed: conf.require(section, "seed")?,
        });
    }
    if out.is_empty() {
        return Err(conf.err("manifest lists no locations"));
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<LocationSpec>> {
    parse_manifest(&ConfigFile::load(path)?)
}

pub fn manifest_text(locations: &[LocationSpec]) -> String {
    let mut s = String::new();
    for l in locations {
        let c = &l.climate;
        s.push_str(&format!(
            "[{}]\nzone = {}\nmean_temp_c = {}\nseasonal_amplitude_c = {}\ndiurnal_amplitude_c = {}\n\
             humidity_base_pct = {}\nwind_base_ms = {}\nnoise_scale = {}\nseed = {}\n\n",
            l.location_id,
            c.zone_id,
            c.mean_temp_c,
            c.seasonal_amplitude_c,
            c.diurnal_amplitude_c,
            c.humidity_base_pct,
            c.wind_base_ms,
            c.noise_scale,
            l.seed
        ));
    }
    s
}

/// The ten-location, five-zone suite: two sibling locations per zone,
/// running from mild coastal (Z1) to subarctic (Z5).
pub fn default_suite() -> Vec<LocationSpec> {
    #[rustfmt::skip]
    let rows: [(&str, &str, f64, f64, f64, f64, f64, u64); 10] = [
        // id     zone   mean   seas   diur   rh    wind  seed
        ("van",  "Z1",  10.5,   6.5,   3.5,  79.0,  5.5,  101),
        ("vic",  "Z1",   9.8,   6.0,   4.0,  76.0,  6.0,  103),
        ("tor",  "Z2",   8.5,  12.5,   5.0,  70.0,  4.2,  201),
        ("lon",  "Z2",   8.0,  13.0,   5.5,  72.0,  4.0,  203),
        ("cal",  "Z3",   4.5,  14.5,   6.5,  58.0,  4.0,  301),
        ("edm",  "Z3",   3.5,  15.5,   6.0,  62.0,  3.6,  303),
        ("win",  "Z4",   2.5,  19.0,   6.0,  68.0,  4.6,  401),
        ("tho",  "Z4",  -3.0,  19.5,   5.0,  72.0,  3.8,  403),
        ("daw",  "Z5",  -4.5,  20.0,   5.5,  66.0,  2.2,  501),
        ("whi",  "Z5",  -1.0,  16.5,   6.0,  64.0,  3.0,  503),
    ];
    rows.iter()
        .map(|&(id, zone, mean, seas, diur, rh, wind, seed)| LocationSpec {
            location_id: id.to_string(),
            climate: ClimateZoneSpec {
                zone_id: zone.to_string(),
                mean_temp_c: mean,
                seasonal_amplitude_c: seas,
                diurnal_amplitude_c: diur,
                humidity_base_pct: rh,
                wind_base_ms: wind,
                noise_scale: 1.0,
            },
            seed,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(noise: f64) -> ClimateZoneSpec {
        ClimateZoneSpec {
            zone_id: "T".into(),
            mean_temp_c: 0.0,
            seasonal_amplitude_c: 0.0,
            diurnal_amplitude_c: 0.0,
            humidity_base_pct: 50.0,
            wind_base_ms: 3.0,
            noise_scale: noise,
        }
    }

    #[test]
    fn quiet_spec_is_flat() {
        let y = synth_climate(&flat(0.0), 1).unwrap();
        assert!(y.hours().iter().all(|h| h.drybulb_c == 0.0));
        assert!(y.hours().iter().all(|h| h.rel_humidity_pct == 50.0 && h.wind_ms == 3.0));
    }

    #[test]
    fn nights_are_dark() {
        for loc in default_suite() {
            let y = loc.generate().unwrap();
            for (h, rec) in y.hours().iter().enumerate() {
                let hod = h % 24;
                if hod == 2 || hod < 6 || hod > 18 {
                    assert_eq!(rec.ghi_whm2, 0.0, "hour {h}");
                }
            }
            assert!(y.hours()[12].ghi_whm2 > 500.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = &default_suite()[4].climate;
        let a = synth_climate(spec, 42).unwrap();
        let b = synth_climate(spec, 42).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = synth_climate(spec, 43).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn noise_is_bounded() {
        let spec = flat(1.0);
        let y = synth_climate(&spec, 7).unwrap();
        let bound = TEMP_NOISE.0 + TEMP_NOISE.1;
        assert!(y.hours().iter().all(|h| h.drybulb_c.abs() <= bound));
        assert!(y.hours().iter().any(|h| h.drybulb_c.abs() > 1.0));
    }

    #[test]
    fn seasons_follow_cosine() {
        let mut spec = flat(0.0);
        spec.seasonal_amplitude_c = 10.0;
        let y = synth_climate(&spec, 0).unwrap();
        assert!((y.hours()[0].drybulb_c + 10.0).abs() < 1e-12);
        // mid-year (day 182) is near the warm peak
        assert!(y.hours()[182 * 24].drybulb_c > 9.9);
    }

    #[test]
    fn manifest_round_trip_and_missing_field() {
        let suite = default_suite();
        let conf = ConfigFile::parse(&manifest_text(&suite), "m").unwrap();
        assert_eq!(parse_manifest(&conf).unwrap(), suite);

        let broken = manifest_text(&suite[..1]).replace("zone = Z1\n", "");
        let conf = ConfigFile::parse(&broken, "m").unwrap();
        let err = parse_manifest(&conf).unwrap_err().to_string();
        assert!(err.contains("zone"), "{err}");
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = flat(0.0);
        s.humidity_base_pct = 120.0;
        assert!(synth_climate(&s, 0).is_err());
        let mut s = flat(0.0);
        s.seasonal_amplitude_c = -1.0;
        assert!(synth_climate(&s, 0).is_err());
    }
}
